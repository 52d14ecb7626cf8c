"""Filtered-derivative change-point detection with proximal denoising.

Pipeline on observations ``Y[1..n]`` with window ``theta``:

1. window means ``Ybar[i] = mean(Y[i .. i+theta-1])``, ``1 <= i <= n-theta+1``
2. ``Xhat[i] = prox(Ybar[i], lam)``
3. ``S[t] = ||Xhat[t+1] - Xhat[t-theta+1]||_2`` for ``theta <= t <= n-theta``
4. ``S[t] = 0`` where ``S[t] < gamma``
5. group nonzero ``t`` whose consecutive gaps are ``<= theta``; in ``full``
   mode report the argmax of each group (smallest index on ties).

With the identity regularizer this is the classical filtered derivative.
Change-points use the convention of :mod:`atomcpd.signals`: ``t`` is the
number of observations before the change.

Storage is 0-based: ``Ybar``/``Xhat`` row ``i`` is window ``i + 1``, and
``S`` is an array of length ``n - 2 theta + 1`` whose entry ``k`` is
``S[theta + k]``.
"""

from __future__ import annotations

import json
import math
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigError
from .geometry import DEFAULT_NUM_SAMPLES, select_lambda
from .regularizers import canonical_id, get_regularizer
from .signals import ObservationSequence

__all__ = [
    "AutoLambda",
    "DetectorConfig",
    "ChangePointReport",
    "ChangePointEvent",
    "WindowMeans",
    "filter_means",
    "denoise_windows",
    "difference",
    "threshold",
    "group_and_select",
    "detect",
    "detect_streaming",
    "StreamingDetector",
    "ChangePointDetector",
]

RECOMPUTE_EVERY = 1 << 10
MODES = ("full", "groups_only")


@dataclass(frozen=True)
class AutoLambda:
    """Deferred ``lam = (sigma / sqrt(theta)) * lam*`` computed from known signal values."""

    representatives: Sequence
    sigma: float
    num_samples: int = DEFAULT_NUM_SAMPLES
    seed: object = 0

    def resolve(self, reg, theta):
        return select_lambda(reg, self.representatives, theta, self.sigma, num_samples=self.num_samples, seed=self.seed)


@dataclass(frozen=True)
class DetectorConfig:
    theta: int
    gamma: float
    lam: Union[float, AutoLambda] = 0.0
    regularizer: str = "l1"
    mode: str = "full"

    def __post_init__(self):
        if isinstance(self.theta, bool) or int(self.theta) != self.theta or self.theta < 1:
            raise ConfigError(f"theta must be an integer >= 1, got {self.theta}")
        object.__setattr__(self, "theta", int(self.theta))
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if not isinstance(self.lam, AutoLambda) and not float(self.lam) >= 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        object.__setattr__(self, "regularizer", canonical_id(self.regularizer))
        if self.mode == "groups":
            object.__setattr__(self, "mode", "groups_only")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")

    def resolved(self, reg):
        if isinstance(self.lam, AutoLambda):
            return DetectorConfig(self.theta, self.gamma, float(self.lam.resolve(reg, self.theta)), self.regularizer, self.mode)
        return self

    def to_dict(self):
        lam = "auto" if isinstance(self.lam, AutoLambda) else float(self.lam)
        return {"theta": self.theta, "gamma": float(self.gamma), "lambda": lam,
                "regularizer": self.regularizer, "mode": self.mode}


@dataclass(frozen=True)
class WindowMeans:
    ybar: np.ndarray
    theta: int


@dataclass(frozen=True)
class ChangePointEvent:
    """A finalized group (and its estimate in ``full`` mode)."""

    group: tuple
    estimate: Optional[int]


@dataclass
class ChangePointReport:
    estimates: list
    groups: list
    derivative: np.ndarray
    thresholded: np.ndarray
    config: DetectorConfig
    timing_ms: dict = field(default_factory=dict)

    @property
    def S_offset(self):
        return self.config.theta

    def to_dict(self, timing=True):
        d = {
            "estimates": [int(t) for t in self.estimates],
            "groups": [[int(lo), int(hi)] for lo, hi in self.groups],
            "S": [float(v) for v in self.derivative],
            "S_offset": int(self.config.theta),
            "config": self.config.to_dict(),
        }
        if timing:
            d["timing_ms"] = {k: float(v) for k, v in self.timing_ms.items()}
        return d

    def to_json(self, timing=True):
        return json.dumps(self.to_dict(timing=timing))

    def events(self):
        if self.config.mode == "full":
            return [ChangePointEvent(tuple(g), e) for g, e in zip(self.groups, self.estimates)]
        return [ChangePointEvent(tuple(g), None) for g in self.groups]


class _WindowSum:
    """Running sum over the last ``theta`` rows, recomputed exactly every 1024 updates."""

    def __init__(self, theta, p):
        self.theta = theta
        self.rows = deque()
        self.total = np.zeros(p)
        self.updates = 0

    def push(self, row):
        """Add a row; return the window mean once ``theta`` rows are held, else None."""
        if self.theta == 1:
            return np.array(row, dtype=float)
        self.rows.append(row)
        self.total = self.total + row
        if len(self.rows) > self.theta:
            self.total = self.total - self.rows.popleft()
        self.updates += 1
        if self.updates % RECOMPUTE_EVERY == 0:
            self.total = np.sum(np.array(self.rows), axis=0)
        if len(self.rows) == self.theta:
            return self.total / self.theta
        return None


def _norm(v):
    return math.sqrt(float(np.dot(v, v)))


def _obs(obs):
    if isinstance(obs, ObservationSequence):
        return obs
    arr = np.asarray(obs, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return ObservationSequence(arr.reshape(arr.shape[0], -1), (int(np.prod(arr.shape[1:])),))


def filter_means(obs, theta) -> WindowMeans:
    """Sliding means of ``theta`` consecutive observations (``n - theta + 1`` rows)."""
    obs = _obs(obs)
    if theta < 1 or theta > obs.n:
        raise ConfigError(f"theta={theta} must lie in [1, n={obs.n}]")
    acc = _WindowSum(theta, obs.p)
    out = np.empty((obs.n - theta + 1, obs.p))
    k = 0
    for row in obs.data:
        m = acc.push(row)
        if m is not None:
            out[k] = m
            k += 1
    return WindowMeans(out, theta)


def denoise_windows(means, reg, lam, n_jobs=None):
    """``prox(Ybar[i], lam)`` for every window; ``n_jobs`` threads (results do not depend on it)."""
    ybar = means.ybar if isinstance(means, WindowMeans) else np.asarray(means, dtype=float)
    lam = float(lam)
    if not lam >= 0:
        raise ConfigError("lambda must be >= 0")
    if n_jobs is None or n_jobs == 1 or len(ybar) < 2:
        rows = [reg.prox_array(y, lam) for y in ybar]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            rows = list(ex.map(lambda y: reg.prox_array(y, lam), ybar))
    return np.array(rows).reshape(len(ybar), -1)


def difference(xhat, theta):
    """``S[t] = ||Xhat[t+1] - Xhat[t-theta+1]||`` for ``theta <= t <= n - theta``."""
    xhat = np.asarray(xhat, dtype=float)
    if xhat.ndim == 1:
        xhat = xhat[:, None]
    m = xhat.shape[0] - theta
    if m <= 0:
        return np.zeros(0)
    return np.array([_norm(xhat[k + theta] - xhat[k]) for k in range(m)])


def threshold(S, gamma):
    """Zero out entries below ``gamma``."""
    if not gamma > 0:
        raise ConfigError("gamma must be > 0")
    S = np.asarray(S, dtype=float)
    return np.where(S < gamma, 0.0, S)


def group_and_select(S_thresholded, theta, mode="full", offset=None):
    """Group nonzero indices with gaps ``<= theta``; return ``(groups, estimates)``.

    Indices are reported as ``t = offset + k`` (``offset`` defaults to
    ``theta``, matching the output of :func:`difference`).
    """
    offset = theta if offset is None else offset
    S = np.asarray(S_thresholded, dtype=float)
    groups, estimates = [], []
    nz = np.flatnonzero(S)
    if nz.size == 0:
        return groups, estimates
    splits = np.flatnonzero(np.diff(nz) > theta) + 1
    for block in np.split(nz, splits):
        groups.append((int(block[0] + offset), int(block[-1] + offset)))
        if mode == "full":
            estimates.append(int(block[np.argmax(S[block])] + offset))
    return groups, estimates


def _prepare(obs, config):
    obs = _obs(obs)
    if not isinstance(config, DetectorConfig):
        raise ConfigError("config must be a DetectorConfig")
    reg = get_regularizer(config.regularizer, obs.shape)
    config = config.resolved(reg)
    return obs, reg, config


def detect(obs, config: DetectorConfig, n_jobs=None) -> ChangePointReport:
    """Run the full batch pipeline."""
    obs, reg, config = _prepare(obs, config)
    theta = config.theta
    if obs.n < 2 * theta:
        raise ConfigError(f"need n >= 2*theta, got n={obs.n}, theta={theta}")
    timing = {}
    t0 = time.perf_counter()
    means = filter_means(obs, theta)
    t1 = time.perf_counter()
    xhat = denoise_windows(means, reg, config.lam, n_jobs=n_jobs)
    t2 = time.perf_counter()
    S = difference(xhat, theta)
    t3 = time.perf_counter()
    St = threshold(S, config.gamma)
    t4 = time.perf_counter()
    groups, estimates = group_and_select(St, theta, config.mode)
    t5 = time.perf_counter()
    for name, a, b in (("filter", t0, t1), ("denoise", t1, t2), ("difference", t2, t3),
                       ("threshold", t3, t4), ("group", t4, t5)):
        timing[name] = (b - a) * 1e3
    return ChangePointReport(estimates, groups, S, St, config, timing)


class StreamingDetector:
    """Online version of :func:`detect`, fed one observation at a time.

    Holds the running window sum, the last ``theta + 1`` denoised means and
    the open group. A group is emitted once no later index can join it,
    i.e. ``2 theta + 1`` observations after its last member.

    Examples
    --------
    >>> det = StreamingDetector(DetectorConfig(theta=2, gamma=1.0, lam=0.0, regularizer="identity"), shape=1)
    >>> events = [e for y in [0, 0, 0, 0, 5, 5, 5, 5] for e in det.update([y])]
    >>> events += det.close()
    >>> [e.estimate for e in events]
    [4]
    """

    def __init__(self, config: DetectorConfig, shape, n_jobs=None):
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape),)
        self.shape = tuple(shape)
        self.reg = get_regularizer(config.regularizer, self.shape)
        self.config = config.resolved(self.reg)
        self.theta = self.config.theta
        self._acc = _WindowSum(self.theta, self.reg.p)
        self._xhat = deque(maxlen=self.theta + 1)
        self._S = []
        self._St = []
        self._group = None  # [lo, hi, best_t, best_val]
        self._groups, self._estimates = [], []
        self._closed = False
        self.n_seen = 0
        self.timing_ms = {"filter": 0.0, "denoise": 0.0, "difference": 0.0, "threshold": 0.0, "group": 0.0}

    def _emit(self):
        lo, hi, best_t, _ = self._group
        self._group = None
        self._groups.append((lo, hi))
        est = best_t if self.config.mode == "full" else None
        if est is not None:
            self._estimates.append(est)
        return ChangePointEvent((lo, hi), est)

    def update(self, row):
        """Consume one observation; return the list of groups finalized by it."""
        if self._closed:
            raise ConfigError("detector already closed")
        row = np.asarray(row, dtype=float).ravel()
        if row.size != self.reg.p:
            raise ConfigError(f"expected {self.reg.p} values per observation, got {row.size}")
        self.n_seen += 1
        tm = self.timing_ms
        t0 = time.perf_counter()
        m = self._acc.push(row)
        t1 = time.perf_counter()
        tm["filter"] += (t1 - t0) * 1e3
        if m is None:
            return []
        self._xhat.append(self.reg.prox_array(m, self.config.lam))
        t2 = time.perf_counter()
        tm["denoise"] += (t2 - t1) * 1e3
        if len(self._xhat) <= self.theta:
            return []
        # window count is n_seen - theta + 1 and the newest pair gives S[t] with t = n_seen - theta
        t = self.n_seen - self.theta
        s = _norm(self._xhat[-1] - self._xhat[0])
        t3 = time.perf_counter()
        st = 0.0 if s < self.config.gamma else s
        self._S.append(s)
        self._St.append(st)
        t4 = time.perf_counter()
        out = []
        if self._group is not None and t - self._group[1] > self.theta:
            out.append(self._emit())
        if st != 0.0:
            if self._group is None:
                self._group = [t, t, t, st]
            else:
                self._group[1] = t
                if st > self._group[3]:
                    self._group[2], self._group[3] = t, st
        t5 = time.perf_counter()
        tm["difference"] += (t3 - t2) * 1e3
        tm["threshold"] += (t4 - t3) * 1e3
        tm["group"] += (t5 - t4) * 1e3
        return out

    def close(self):
        """End of stream: flush the open group."""
        self._closed = True
        if self._group is not None:
            return [self._emit()]
        return []

    def report(self) -> ChangePointReport:
        return ChangePointReport(
            list(self._estimates), list(self._groups), np.array(self._S), np.array(self._St),
            self.config, dict(self.timing_ms),
        )


def detect_streaming(source: Iterable, config: DetectorConfig, shape, n_jobs=None):
    """Yield :class:`ChangePointEvent` objects as groups are finalized."""
    det = StreamingDetector(config, shape)
    for row in source:
        yield from det.update(row)
    yield from det.close()


class ChangePointDetector(BaseEstimator):
    """Scikit-learn style wrapper around :func:`detect`.

    Parameters
    ----------
    theta : int
        Averaging window.
    gamma : float
        Threshold on the denoised derivative.
    lam : float or "auto"
        Prox weight. ``"auto"`` needs ``sigma`` and ``representatives``.
    prox : str
        Regularizer id.
    mode : {"full", "groups_only"}
    shape : tuple, optional
        Per-observation shape; defaults to ``(n_features,)``.
    sigma : float, optional
    representatives : list of array, optional
        Signal values used to pick ``lam`` when ``lam="auto"``.
    num_samples, random_state
        Monte Carlo controls for ``lam="auto"``.
    n_jobs : int, optional
        Threads for the denoising step.

    Attributes
    ----------
    report_ : ChangePointReport
    change_points_ : ndarray
    groups_ : list of (lo, hi)
    derivative_ : ndarray
    lambda_ : float
    """

    def __init__(self, theta=10, gamma=1.0, lam=0.0, prox="l1", mode="full", shape=None,
                 sigma=None, representatives=None, num_samples=DEFAULT_NUM_SAMPLES,
                 random_state=0, n_jobs=None):
        self.theta = theta
        self.gamma = gamma
        self.lam = lam
        self.prox = prox
        self.mode = mode
        self.shape = shape
        self.sigma = sigma
        self.representatives = representatives
        self.num_samples = num_samples
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self):
        lam = self.lam
        if isinstance(lam, str):
            if lam != "auto":
                raise ConfigError(f"lam must be a float or 'auto', got {lam!r}")
            if self.sigma is None or self.representatives is None:
                raise ConfigError("lam='auto' needs sigma and representatives")
            lam = AutoLambda(self.representatives, self.sigma, self.num_samples, self.random_state)
        return DetectorConfig(self.theta, self.gamma, lam, self.prox, self.mode)

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        shape = self.shape if self.shape is not None else (X.shape[1],)
        obs = ObservationSequence(X, shape, sigma=self.sigma)
        self.report_ = detect(obs, self._config(), n_jobs=self.n_jobs)
        self.change_points_ = np.array(self.report_.estimates, dtype=int)
        self.groups_ = list(self.report_.groups)
        self.derivative_ = self.report_.derivative
        self.lambda_ = float(self.report_.config.lam)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_predict(self, X, y=None):
        """Estimated change-points (or group left ends in ``groups_only`` mode)."""
        self.fit(X)
        if self.report_.config.mode == "groups_only":
            return np.array([g[0] for g in self.groups_], dtype=int)
        return self.change_points_

    def transform(self, X):
        """The derivative trace ``S`` of ``X`` under the fitted configuration."""
        check_is_fitted(self, "report_")
        X = check_array(X, ensure_min_samples=2)
        shape = self.shape if self.shape is not None else (X.shape[1],)
        cfg = self.report_.config
        return detect(ObservationSequence(X, shape), cfg, n_jobs=self.n_jobs).derivative

"""Gaussian distance estimation and the recovery-condition bookkeeping.

The Gaussian distance of a collection of signals is::

    eta(X) = inf_{lam >= 0} max_j E_g[ dist(g, lam * subdiff ||X_j||_C) ],   g ~ N(0, I_p)

It is estimated here by Monte Carlo with common random numbers: one fixed
batch of Gaussian samples is reused for every representative and every
``lam``, so the grid minimum is stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CapabilityError, ConfigError
from .regularizers import get_regularizer
from .signals import make_rng

__all__ = [
    "EtaEstimate",
    "RecoveryCondition",
    "estimate_eta",
    "analytic_eta_bound",
    "select_lambda",
    "scale_lambda",
    "check_recovery_condition",
    "theorem_parameter_rule",
    "expected_gaussian_norm",
    "DEFAULT_NUM_SAMPLES",
]

DEFAULT_NUM_SAMPLES = 2000
GRID_POINTS = 50
GRID_LO = 1e-2
_CHUNK = 256
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class EtaEstimate:
    eta: float
    lambda_star: float
    num_samples: int
    std_error: float
    per_signal_values: dict
    grid: np.ndarray = field(repr=False, default=None)
    curve: np.ndarray = field(repr=False, default=None)
    curve_std_error: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {
            "eta": self.eta,
            "lambda_star": self.lambda_star,
            "std_error": self.std_error,
            "num_samples": self.num_samples,
        }


@dataclass(frozen=True)
class RecoveryCondition:
    delta_min: float
    t_min: float
    sigma: float
    n: int
    r: float
    eta: float
    lhs: float
    rhs: float
    satisfied: bool

    def to_dict(self):
        return dict(self.__dict__)


def expected_gaussian_norm(p):
    """``E ||g||_2`` for ``g ~ N(0, I_p)``: ``sqrt(2) Gamma((p+1)/2) / Gamma(p/2)``."""
    return math.sqrt(2.0) * math.exp(math.lgamma((p + 1) / 2.0) - math.lgamma(p / 2.0))


def _gaussian_samples(p, num_samples, seed):
    # chunk c is drawn from PCG64([seed, c]) so the samples do not depend on how work is split
    base = 0 if seed is None else seed
    base = list(base) if isinstance(base, (list, tuple)) else [int(base)]
    chunks = []
    for c, start in enumerate(range(0, num_samples, _CHUNK)):
        m = min(_CHUNK, num_samples - start)
        chunks.append(make_rng(base + [c]).standard_normal((m, p)))
    return np.vstack(chunks)


def _dedupe(representatives):
    uniq, index = [], []
    for x in representatives:
        for k, u in enumerate(uniq):
            if np.array_equal(u, x):
                index.append(k)
                break
        else:
            index.append(len(uniq))
            uniq.append(x)
    return uniq, index


def estimate_eta(reg, representatives, num_samples=DEFAULT_NUM_SAMPLES, lambda_grid=None, seed=None):
    """Monte Carlo estimate of the Gaussian distance of a signal collection.

    Parameters
    ----------
    reg : Regularizer
    representatives : list of array
        Signal values (duplicates are dropped).
    num_samples : int
    lambda_grid : array-like, optional
        Candidate ``lam`` values. The default is 50 log-spaced points on
        ``[1e-2, E||g||_2 / lam_scale]``.
    seed : int or sequence of int

    Returns
    -------
    EtaEstimate
        The grid minimum refined by golden-section search between the
        neighbouring grid points.
    """
    if not reg.has_closed_form_subdiff_dist:
        raise CapabilityError(f"regularizer {reg.id!r} has no subdifferential distance")
    reps = [np.asarray(x, dtype=float).ravel() for x in representatives]
    if not reps:
        raise ConfigError("estimate_eta needs at least one representative")
    if num_samples < 2:
        raise ConfigError("num_samples must be >= 2")
    uniq, index = _dedupe(reps)
    G = _gaussian_samples(reg.p, num_samples, seed)
    profiles = [reg.subdiff_profile(x, G) for x in uniq]

    if lambda_grid is None:
        scale = profiles[0].lam_scale
        lambda_grid = np.geomspace(GRID_LO, expected_gaussian_norm(reg.p) / scale, GRID_POINTS)
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid < 0):
        raise ConfigError("lambda_grid must be a non-empty 1-D array of non-negative values")

    def means(lams):
        # (n_reps, n_lams) sample means and standard errors
        d = np.stack([pr.dist(lams) for pr in profiles])
        return d.mean(axis=1), d.std(axis=1, ddof=1) / math.sqrt(num_samples)

    grid_means, grid_se = means(grid)
    curve = grid_means.max(axis=0)
    curve_se = grid_se[grid_means.argmax(axis=0), np.arange(grid.size)]
    i = int(np.argmin(curve))
    best_lam, best_val = float(grid[i]), float(curve[i])

    if grid.size >= 3:
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        f = lambda lam: float(means([lam])[0].max())
        a, b = lo, hi
        c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(40):
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - _GOLDEN * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + _GOLDEN * (b - a)
                fd = f(d)
        lam = c if fc <= fd else d
        val = min(fc, fd)
        if val < best_val:
            best_lam, best_val = float(lam), float(val)

    m, se = means([best_lam])
    m, se = m[:, 0], se[:, 0]
    j = int(np.argmax(m))
    per_signal = {k: float(m[index[k]]) for k in range(len(reps))}
    return EtaEstimate(
        eta=float(m[j]),
        lambda_star=best_lam,
        num_samples=int(num_samples),
        std_error=float(se[j]),
        per_signal_values=per_signal,
        grid=grid,
        curve=curve,
        curve_std_error=curve_se,
    )


def analytic_eta_bound(kind, **params):
    """Closed-form upper bounds on the Gaussian distance.

    ``analytic_eta_bound("sparse", s=s, p=p)`` gives
    ``sqrt(2 s ln(p/s) + 3s/2) + 7`` for s-sparse vectors under the l1 norm;
    ``analytic_eta_bound("lowrank", r=r, d=d)`` gives ``sqrt(6 r d) + 7`` for
    rank-r ``d x d`` matrices under the nuclear norm.
    """
    if kind == "sparse":
        s, p = params["s"], params["p"]
        if not 1 <= s <= p:
            raise ConfigError(f"need 1 <= s <= p, got s={s}, p={p}")
        return math.sqrt(2 * s * math.log(p / s) + 1.5 * s) + 7.0
    if kind == "lowrank":
        r, d = params["r"], params["d"]
        if not 1 <= r <= d:
            raise ConfigError(f"need 1 <= r <= d, got r={r}, d={d}")
        return math.sqrt(6 * r * d) + 7.0
    raise ConfigError(f"unknown bound kind {kind!r}; use 'sparse' or 'lowrank'")


def scale_lambda(lambda_star, sigma, m):
    """Noise-normalized ``lam*`` to the weight used on an average of ``m`` observations."""
    return sigma / math.sqrt(m) * lambda_star


def select_lambda(reg, representatives, theta, sigma, num_samples=DEFAULT_NUM_SAMPLES, seed=None, eta_estimate=None):
    """Regularization weight ``(sigma / sqrt(theta)) * lam*`` for windows of ``theta`` observations."""
    if theta < 1:
        raise ConfigError("theta must be >= 1")
    if not sigma > 0:
        raise ConfigError("sigma must be > 0")
    if eta_estimate is None:
        eta_estimate = estimate_eta(reg, representatives, num_samples=num_samples, seed=seed)
    return scale_lambda(eta_estimate.lambda_star, sigma, theta)


def check_recovery_condition(delta_min, t_min, sigma, n, r, eta):
    """Evaluate ``delta_min^2 t_min >= 64 sigma^2 (eta + r sqrt(2 ln n))^2``."""
    if not r > 1:
        raise ConfigError(f"r must be > 1, got {r}")
    if n < 2:
        raise ConfigError("n must be >= 2")
    lhs = delta_min**2 * t_min
    rhs = 64.0 * sigma**2 * (eta + r * math.sqrt(2.0 * math.log(n))) ** 2
    return RecoveryCondition(
        delta_min=float(delta_min), t_min=float(t_min), sigma=float(sigma), n=int(n), r=float(r),
        eta=float(eta), lhs=float(lhs), rhs=float(rhs), satisfied=bool(lhs >= rhs),
    )


def theorem_parameter_rule(delta_min, t_min):
    """``(floor(t_min / 4), delta_min / 2)``."""
    if t_min < 4:
        raise ConfigError(f"t_min must be >= 4, got {t_min}")
    return int(math.floor(t_min / 4)), delta_min / 2.0

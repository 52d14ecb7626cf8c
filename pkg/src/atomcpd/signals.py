"""Signal and observation containers plus synthetic generators.

Time indexing follows one convention throughout the package: a change-point
``t`` means the signal changes between observation ``t`` and ``t + 1``
(1-based), which is the same as "the new value starts at 0-based row ``t``".
Segments are stored half-open, ``[start, stop)`` in 0-based rows.

Matrices are stored flattened row-major; every norm is taken on the
flattening.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigError

RNG_NAME = "PCG64"

__all__ = [
    "RNG_NAME",
    "Segment",
    "PiecewiseConstantSignal",
    "ObservationSequence",
    "SignalSpec",
    "make_rng",
    "generate_sparse_blocks",
    "generate_planted_lowrank",
    "generate_cut_matrix",
    "generate",
    "corrupt",
    "signal_statistics",
]


def make_rng(seed=None):
    """Return a PCG64-backed generator. ``seed`` may be an int or a sequence of ints."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def _seed_for_json(seed):
    if seed is None:
        return None
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return int(seed)


def _normalize_shape(shape):
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    if len(shape) not in (1, 2) or any(s < 1 for s in shape):
        raise ConfigError(f"shape must be (p,) or (d1, d2) with positive entries, got {shape}")
    return shape


def _frozen(a):
    a = np.array(a, dtype=float).ravel()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Segment:
    start: int
    stop: int
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", _frozen(self.value))

    @property
    def length(self):
        return self.stop - self.start


@dataclass(frozen=True)
class PiecewiseConstantSignal:
    """Ground-truth piecewise-constant sequence.

    Parameters
    ----------
    n : int
        Number of time steps.
    shape : tuple
        ``(p,)`` for vectors or ``(d1, d2)`` for matrices.
    segments : sequence of Segment
        Must tile ``[0, n)`` in order; adjacent values must differ.
    seed : optional
        Seed the generator was called with, kept for provenance.
    """

    n: int
    shape: tuple
    segments: tuple
    seed: object = None
    kind: str = "custom"
    tau_star: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "shape", _normalize_shape(self.shape))
        segs = tuple(
            s if isinstance(s, Segment) else Segment(int(s[0]), int(s[1]), s[2]) for s in self.segments
        )
        object.__setattr__(self, "segments", segs)
        if self.n < 1:
            raise ConfigError("n must be positive")
        if not segs:
            raise ConfigError("signal needs at least one segment")
        pos = 0
        for seg in segs:
            if seg.start != pos or seg.stop <= seg.start:
                raise ConfigError(f"segments must tile [0, {self.n}) without gaps; bad segment [{seg.start}, {seg.stop})")
            if seg.value.size != self.p:
                raise ConfigError(f"segment value has {seg.value.size} entries, expected {self.p}")
            pos = seg.stop
        if pos != self.n:
            raise ConfigError(f"segments end at {pos}, expected {self.n}")
        for a, b in zip(segs[:-1], segs[1:]):
            if np.array_equal(a.value, b.value):
                raise ConfigError(f"adjacent segments at t={a.stop} have identical values")
        object.__setattr__(self, "tau_star", tuple(s.stop for s in segs[:-1]))

    @property
    def p(self):
        return int(np.prod(self.shape))

    def values(self):
        """Dense ``(n, p)`` array of X*[t]."""
        out = np.empty((self.n, self.p))
        for seg in self.segments:
            out[seg.start:seg.stop] = seg.value
        return out

    def value_at(self, row):
        """Signal value at 0-based row ``row``."""
        for seg in self.segments:
            if seg.start <= row < seg.stop:
                return seg.value
        raise IndexError(row)

    def distinct_values(self):
        """Distinct segment values (order of first appearance)."""
        out = []
        for seg in self.segments:
            if not any(np.array_equal(seg.value, v) for v in out):
                out.append(seg.value)
        return out

    def to_dict(self):
        return {
            "kind": self.kind,
            "n": self.n,
            "shape": list(self.shape),
            "tau_star": list(self.tau_star),
            "segments": [
                {"start": s.start, "stop": s.stop, "value": s.value.tolist()} for s in self.segments
            ],
            "seed": _seed_for_json(self.seed),
            "rng": RNG_NAME,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            segs = [Segment(int(s["start"]), int(s["stop"]), s["value"]) for s in d["segments"]]
            n = int(d.get("n", segs[-1].stop if segs else 0))
            sig = cls(n=n, shape=tuple(d["shape"]), segments=segs, seed=d.get("seed"), kind=d.get("kind", "custom"))
        except (KeyError, TypeError, IndexError) as exc:
            raise ConfigError(f"malformed signal sidecar: {exc}") from exc
        if "tau_star" in d and list(d["tau_star"]) != list(sig.tau_star):
            raise ConfigError("sidecar tau_star does not match its segments")
        return sig


@dataclass(frozen=True)
class ObservationSequence:
    """Noisy observations ``Y[t] = X*[t] + sigma * g[t]`` stored as an ``(n, p)`` array."""

    data: np.ndarray
    shape: tuple
    sigma: Optional[float] = None
    seed: object = None

    def __post_init__(self):
        shape = _normalize_shape(self.shape)
        data = np.array(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim > 2:
            data = data.reshape(data.shape[0], -1)
        if data.shape[1] != int(np.prod(shape)):
            raise ConfigError(f"rows have {data.shape[1]} entries, shape {shape} needs {int(np.prod(shape))}")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        data.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class SignalSpec:
    """Declarative description of a synthetic signal family (``kind`` plus generator kwargs)."""

    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("sparse_blocks", "planted_lowrank", "cut_matrix")

    def __post_init__(self):
        if self.kind not in self.KINDS + ("custom",):
            raise ConfigError(f"unknown signal kind {self.kind!r}")
        for k, v in self.params.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and v < 0:
                raise ConfigError(f"parameter {k} must be non-negative")

    def build(self, seed=None):
        if self.kind == "custom":
            raise ConfigError("custom signals are not generated")
        return generate(self.kind, seed=seed, **self.params)


def generate_sparse_blocks(p, n, k_blocks, s, base=1.0, growth=1.2, seed=None):
    """Equal-length blocks of s-sparse vectors whose nonzeros equal ``base * growth**(k-1)``.

    Supports are drawn uniformly without replacement, independently per block.
    """
    if k_blocks < 1 or n % k_blocks:
        raise ConfigError(f"k_blocks={k_blocks} must divide n={n}")
    if not 0 <= s <= p:
        raise ConfigError(f"sparsity s={s} must lie in [0, p={p}]")
    rng = make_rng(seed)
    length = n // k_blocks
    segs = []
    for k in range(k_blocks):
        v = np.zeros(p)
        v[rng.choice(p, size=s, replace=False)] = base * growth**k
        segs.append(Segment(k * length, (k + 1) * length, v))
    return PiecewiseConstantSignal(n, (p,), segs, seed=seed, kind="sparse_blocks")


def _random_direction(rng, d, scale):
    v = rng.standard_normal(d)
    return scale * v / np.linalg.norm(v)


def generate_planted_lowrank(d, n, change_at, scale=1.0, seed=None):
    """Two segments of rank-one ``d x d`` matrices ``u v'`` with ``|u| = |v| = scale``."""
    if not 1 <= change_at < n:
        raise ConfigError(f"change_at={change_at} must lie in [1, n)")
    if scale <= 0:
        raise ConfigError("scale must be positive; a zero signal has no change")
    rng = make_rng(seed)
    vals = []
    for _ in range(2):
        u = _random_direction(rng, d, scale)
        v = _random_direction(rng, d, scale)
        vals.append(np.outer(u, v).ravel())
    segs = [Segment(0, change_at, vals[0]), Segment(change_at, n, vals[1])]
    return PiecewiseConstantSignal(n, (d, d), segs, seed=seed, kind="planted_lowrank")


def generate_cut_matrix(d, n, change_points=(), seed=None, max_retries=100):
    """Segments with values ``a a'`` for uniform sign vectors ``a``.

    A draw equal to the previous segment's value is resampled, up to
    ``max_retries`` times.
    """
    cps = [int(c) for c in change_points]
    if cps != sorted(set(cps)) or any(not 1 <= c < n for c in cps):
        raise ConfigError(f"change_points must be sorted, distinct and inside [1, n): {cps}")
    rng = make_rng(seed)
    bounds = [0] + cps + [n]
    segs = []
    prev = None
    for start, stop in zip(bounds[:-1], bounds[1:]):
        for _ in range(max_retries):
            a = rng.choice([-1.0, 1.0], size=d)
            val = np.outer(a, a).ravel()
            if prev is None or not np.array_equal(val, prev):
                break
        else:
            raise ConfigError(f"could not draw a distinct cut matrix after {max_retries} tries (d={d})")
        segs.append(Segment(start, stop, val))
        prev = val
    return PiecewiseConstantSignal(n, (d, d), segs, seed=seed, kind="cut_matrix")


_GENERATORS = {
    "sparse_blocks": generate_sparse_blocks,
    "planted_lowrank": generate_planted_lowrank,
    "cut_matrix": generate_cut_matrix,
}


def generate(kind, seed=None, **params):
    try:
        gen = _GENERATORS[kind]
    except KeyError:
        raise ConfigError(f"unknown signal kind {kind!r}") from None
    try:
        return gen(seed=seed, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from exc


def corrupt(signal, sigma, seed=None):
    """Add i.i.d. ``N(0, sigma^2)`` noise to every coordinate of every time step."""
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    x = signal.values()
    if sigma > 0:
        rng = make_rng(seed)
        x = x + sigma * rng.standard_normal(x.shape)
    return ObservationSequence(x, signal.shape, sigma=float(sigma), seed=seed)


def signal_statistics(signal: PiecewiseConstantSignal):
    """Return ``(delta_min, t_min)`` for a signal.

    ``t_min`` is the smallest gap between consecutive change-points, or
    ``inf`` when there are fewer than two.
    """
    segs = signal.segments
    deltas = [float(np.linalg.norm(b.value - a.value)) for a, b in zip(segs[:-1], segs[1:])]
    tau = signal.tau_star
    gaps = [b - a for a, b in zip(tau[:-1], tau[1:])]
    delta_min = min(deltas) if deltas else float("inf")
    t_min = min(gaps) if gaps else float("inf")
    return delta_min, t_min

"""Gauge functions, their proximal operators and subdifferential distances.

Four regularizers are shipped, selected by string id:

============================  =========================  ==========================
id                            gauge                      prox
============================  =========================  ==========================
``identity``                  0                          y
``l1``                        sum |x_i|                  soft-threshold at lam
``nuclear``                   sum of singular values     singular-value soft-threshold
``nuclear_ball_scaled``       nuclear norm / d           singular-value soft-threshold at lam / d
============================  =========================  ==========================

``nuclear_ball_scaled`` is the gauge of the nuclear-norm ball of radius ``d``,
a cheap relaxation of the cut-matrix elliptope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import CapabilityError, ConfigError, NumericalError

__all__ = [
    "ProxResult",
    "SubdiffProfile",
    "Regularizer",
    "IdentityRegularizer",
    "L1Regularizer",
    "NuclearRegularizer",
    "ScaledNuclearBallRegularizer",
    "get_regularizer",
    "canonical_id",
    "REGULARIZER_IDS",
    "gauge",
    "prox",
    "subdiff_dist",
    "soft_threshold",
    "svd",
    "ProximalDenoiser",
]


def soft_threshold(x, lam):
    """``sign(x) * max(|x| - lam, 0)`` with ``sign(0) = 0``."""
    # adding 0.0 turns the -0.0 of shrunk negative entries into +0.0
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0) + 0.0


def svd(a, full_matrices=False):
    """Thin SVD with descending singular values.

    Wraps LAPACK ``gesdd``; non-finite input or non-convergence raises
    :class:`NumericalError` carrying the matrix shape and norm.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NumericalError("SVD input contains non-finite values", shape=a.shape)
    try:
        return np.linalg.svd(a, full_matrices=full_matrices)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge: {exc}", shape=a.shape, fro_norm=float(np.linalg.norm(a))
        ) from exc


def _rank(s):
    if s.size == 0 or s[0] == 0:
        return 0
    tol = s[0] * max(s.size, 1) * np.finfo(float).eps * 10
    return int(np.sum(s > tol))


@dataclass(frozen=True)
class ProxResult:
    x_hat: np.ndarray
    objective: float


@dataclass(frozen=True)
class SubdiffProfile:
    """Per-sample summary of ``dist(g_i, lam * subdiff)`` as a function of ``lam``.

    For both shipped norm families the squared distance decomposes as::

        dist^2 = A - 2 lam B + lam^2 r + sum_j max(M_j - lam, 0)^2

    where ``A``/``B`` come from the component of ``g`` in the "support"
    subspace, ``r`` is the support size (or rank) and ``M`` holds the
    magnitudes (or singular values) of the off-support component. The
    effective threshold is ``lam * lam_scale``.
    """

    A: np.ndarray
    B: np.ndarray
    r: int
    M: np.ndarray
    lam_scale: float = 1.0

    def dist(self, lams):
        """Distances for every sample (rows) and every ``lam`` (columns)."""
        lams = np.atleast_1d(np.asarray(lams, dtype=float)) * self.lam_scale
        out = np.empty((self.A.shape[0], lams.size))
        for k, lam in enumerate(lams):
            d2 = self.A - 2.0 * lam * self.B + lam * lam * self.r
            if self.M.shape[1]:
                d2 = d2 + np.sum(np.maximum(self.M - lam, 0.0) ** 2, axis=1)
            out[:, k] = np.sqrt(np.maximum(d2, 0.0))
        return out


class Regularizer:
    """Base class: a gauge ``||.||_C`` on arrays of a fixed shape."""

    id = None
    kappa = None
    has_closed_form_subdiff_dist = False

    def __init__(self, shape):
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape),)
        self.shape = tuple(int(s) for s in shape)
        self.p = int(np.prod(self.shape))

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"

    def _flat(self, x):
        x = np.asarray(x, dtype=float)
        if x.size != self.p:
            raise ConfigError(f"{self.id}: expected {self.p} entries for shape {self.shape}, got {x.size}")
        return x.ravel()

    def gauge(self, x):
        raise NotImplementedError

    def prox_array(self, y, lam):
        """Exact minimizer of ``0.5 * ||y - x||^2 + lam * ||x||_C`` as a flat array."""
        return self._prox(self._flat(y), self._check_lam(lam))[0]

    def prox(self, y, lam):
        y = self._flat(y)
        lam = self._check_lam(lam)
        x, g = self._prox(y, lam)
        obj = 0.5 * float(np.dot(y - x, y - x)) + lam * g
        return ProxResult(x, obj)

    def _check_lam(self, lam):
        lam = float(lam)
        if not lam >= 0:
            raise ConfigError(f"lambda must be >= 0, got {lam}")
        return lam

    def _prox(self, y, lam):
        """Return ``(x_hat, gauge(x_hat))``."""
        raise NotImplementedError

    def subdiff_dist(self, x_ref, g, lam):
        raise CapabilityError(f"regularizer {self.id!r} has no subdifferential distance")

    def subdiff_profile(self, x_ref, G):
        raise CapabilityError(f"regularizer {self.id!r} has no subdifferential distance")

    def subgradient(self, x):
        """One element of the subdifferential at ``x``."""
        raise CapabilityError(f"regularizer {self.id!r} does not expose subgradients")


class IdentityRegularizer(Regularizer):
    """No regularization; turns the detector into the plain filtered derivative."""

    id = "identity"

    def gauge(self, x):
        self._flat(x)
        return 0.0

    def _prox(self, y, lam):
        return y.copy(), 0.0


class L1Regularizer(Regularizer):
    id = "l1"
    kappa = 1.0
    has_closed_form_subdiff_dist = True

    def gauge(self, x):
        return float(np.sum(np.abs(self._flat(x))))

    def _prox(self, y, lam):
        x = soft_threshold(y, lam)
        return x, float(np.sum(np.abs(x)))

    def subgradient(self, x):
        return np.sign(self._flat(x))

    def subdiff_dist(self, x_ref, g, lam):
        x_ref, g = self._flat(x_ref), self._flat(g)
        lam = self._check_lam(lam)
        on = x_ref != 0
        d2 = np.sum((g[on] - lam * np.sign(x_ref[on])) ** 2)
        d2 += np.sum(np.maximum(np.abs(g[~on]) - lam, 0.0) ** 2)
        return float(math.sqrt(d2))

    def subdiff_profile(self, x_ref, G):
        x_ref = self._flat(x_ref)
        G = np.asarray(G, dtype=float).reshape(-1, self.p)
        on = x_ref != 0
        sgn = np.sign(x_ref[on])
        Gon = G[:, on]
        return SubdiffProfile(
            A=np.sum(Gon**2, axis=1), B=Gon @ sgn, r=int(on.sum()), M=np.abs(G[:, ~on])
        )


class NuclearRegularizer(Regularizer):
    id = "nuclear"
    kappa = 1.0
    has_closed_form_subdiff_dist = True
    _lam_scale = 1.0

    def __init__(self, shape):
        super().__init__(shape)
        if len(self.shape) != 2:
            raise ConfigError(f"{self.id} needs a matrix shape (d1, d2), got {self.shape}")

    def _mat(self, x):
        return self._flat(x).reshape(self.shape)

    def gauge(self, x):
        return float(np.sum(svd(self._mat(x))[1])) * self._lam_scale

    def _prox(self, y, lam):
        lam = lam * self._lam_scale
        u, s, vt = svd(y.reshape(self.shape))
        s = np.maximum(s - lam, 0.0)
        k = int(np.count_nonzero(s))
        x = (u[:, :k] * s[:k]) @ vt[:k]
        return x.ravel(), float(np.sum(s)) * self._lam_scale

    def _tangent(self, x_ref):
        u, s, vt = svd(x_ref.reshape(self.shape), full_matrices=True)
        r = _rank(s)
        return u[:, :r], vt[:r].T, u[:, r:], vt[r:].T

    def subgradient(self, x):
        U, V, _, _ = self._tangent(self._flat(x))
        return (U @ V.T).ravel() * self._lam_scale

    def subdiff_dist(self, x_ref, g, lam):
        x_ref = self._flat(x_ref)
        G = self._mat(g)
        lam = self._check_lam(lam) * self._lam_scale
        U, V, Uc, Vc = self._tangent(x_ref)
        # P_T(g) = g - Uc Uc' g Vc Vc'
        core = Uc.T @ G @ Vc
        pt = G - Uc @ core @ Vc.T
        d2 = np.sum((pt - lam * (U @ V.T)) ** 2)
        if core.size:
            sv = np.linalg.svd(core, compute_uv=False)
            d2 += np.sum(np.maximum(sv - lam, 0.0) ** 2)
        return float(math.sqrt(max(d2, 0.0)))

    def subdiff_profile(self, x_ref, G):
        x_ref = self._flat(x_ref)
        G = np.asarray(G, dtype=float).reshape((-1,) + self.shape)
        U, V, Uc, Vc = self._tangent(x_ref)
        core = np.einsum("ia,nij,jb->nab", Uc, G, Vc)
        total = np.sum(G**2, axis=(1, 2))
        if core.size:
            M = np.linalg.svd(core, compute_uv=False)
            off = np.sum(core**2, axis=(1, 2))
        else:
            M = np.zeros((G.shape[0], 0))
            off = np.zeros(G.shape[0])
        B = np.einsum("nij,ij->n", G, U @ V.T)
        return SubdiffProfile(A=total - off, B=B, r=U.shape[1], M=M, lam_scale=self._lam_scale)


class ScaledNuclearBallRegularizer(NuclearRegularizer):
    """Gauge of ``{X : ||X||_* <= radius}``, i.e. ``||X||_* / radius`` (radius defaults to d)."""

    id = "nuclear_ball_scaled"
    kappa = None

    def __init__(self, shape, radius=None):
        super().__init__(shape)
        if radius is None:
            if self.shape[0] != self.shape[1]:
                raise ConfigError("nuclear_ball_scaled needs an explicit radius for non-square shapes")
            radius = self.shape[0]
        self.radius = float(radius)
        self._lam_scale = 1.0 / self.radius


REGULARIZER_IDS = {
    "identity": IdentityRegularizer,
    "none": IdentityRegularizer,
    "l1": L1Regularizer,
    "nuclear": NuclearRegularizer,
    "nuclear_ball_scaled": ScaledNuclearBallRegularizer,
    "nuclear-ball": ScaledNuclearBallRegularizer,
}


_ALIASES = {"none": "identity", "nuclear-ball": "nuclear_ball_scaled"}


def canonical_id(name):
    """Map CLI aliases onto regularizer ids, validating the name."""
    name = _ALIASES.get(name, name)
    if name not in REGULARIZER_IDS:
        raise ConfigError(f"unknown regularizer {name!r}; choose from {sorted(REGULARIZER_IDS)}")
    return name


def get_regularizer(reg, shape=None):
    """Resolve a regularizer id (CLI aliases ``none`` and ``nuclear-ball`` accepted)."""
    if isinstance(reg, Regularizer):
        return reg
    try:
        cls = REGULARIZER_IDS[reg]
    except KeyError:
        raise ConfigError(f"unknown regularizer {reg!r}; choose from {sorted(REGULARIZER_IDS)}") from None
    if shape is None:
        raise ConfigError("a shape is needed to build a regularizer")
    return cls(shape)


def gauge(reg, x):
    return reg.gauge(x)


def prox(reg, y, lam):
    return reg.prox(y, lam)


def subdiff_dist(reg, x_ref, g, lam):
    return reg.subdiff_dist(x_ref, g, lam)


class ProximalDenoiser(TransformerMixin, BaseEstimator):
    """Row-wise proximal denoising as a scikit-learn transformer.

    Parameters
    ----------
    prox : str, default="l1"
        Regularizer id.
    lam : float, default=1.0
        Regularization weight.
    shape : tuple or None
        Per-row signal shape; defaults to ``(n_features,)``.

    Examples
    --------
    >>> import numpy as np
    >>> ProximalDenoiser(lam=1.0).fit_transform(np.array([[3.0, -1.0, 0.5]]))
    array([[2., 0., 0.]])
    """

    def __init__(self, prox="l1", lam=1.0, shape=None):
        self.prox = prox
        self.lam = lam
        self.shape = shape

    def fit(self, X, y=None):
        X = check_array(X)
        shape = self.shape if self.shape is not None else (X.shape[1],)
        if int(np.prod(shape)) != X.shape[1]:
            raise ConfigError(f"shape {shape} does not match {X.shape[1]} features")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        self.regularizer_ = get_regularizer(self.prox, shape)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "regularizer_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return np.vstack([self.regularizer_.prox_array(row, self.lam) for row in X])

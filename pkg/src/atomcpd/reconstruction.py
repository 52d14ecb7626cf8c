"""Signal reconstruction between estimated change-points.

Between consecutive estimates ``t1 < t2`` the observations
``Y[t1+theta+1 .. t2-theta]`` (1-based) are averaged, skipping a
``theta``-wide buffer on each side, and the average is denoised with
``lam' = (sigma / sqrt(m)) * lam*`` where ``m = t2 - t1 - 2 theta``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigError
from .geometry import DEFAULT_NUM_SAMPLES, scale_lambda, select_lambda
from .regularizers import get_regularizer
from .signals import ObservationSequence

__all__ = [
    "SegmentEstimate",
    "ShortSegmentWarning",
    "reconstruct_segment",
    "reconstruct_all",
    "error_bound",
    "SegmentReconstructor",
]


class ShortSegmentWarning(UserWarning):
    """An inter-estimate interval was too short (``<= 2 theta``) to reconstruct."""


@dataclass(frozen=True)
class SegmentEstimate:
    """Reconstruction on the 1-based inclusive interval ``(first, last)``."""

    interval: tuple
    x_bar: np.ndarray
    lambda_prime: float
    m: int

    def to_dict(self):
        return {"interval": list(self.interval), "m": self.m, "lambda_prime": self.lambda_prime}


def error_bound(sigma, m, eta, s):
    """Squared-error bound ``(2 sigma^2 / m) (eta^2 + s^2)``."""
    return 2.0 * sigma**2 / m * (eta**2 + s**2)


def _lambda_prime(reg, m, lambda_prime, lambda_star, sigma, representatives, num_samples, seed):
    if lambda_prime is not None:
        lam = float(lambda_prime)
        if not lam >= 0:
            raise ConfigError("lambda_prime must be >= 0")
        return lam
    if sigma is None:
        raise ConfigError("automatic lambda_prime needs sigma")
    if lambda_star is not None:
        return scale_lambda(lambda_star, sigma, m)
    if representatives is None:
        raise ConfigError("automatic lambda_prime needs lambda_star or representatives")
    return select_lambda(reg, representatives, m, sigma, num_samples=num_samples, seed=seed)


def reconstruct_segment(obs: ObservationSequence, t1, t2, theta, reg, lambda_prime=None, *,
                        lambda_star=None, sigma=None, representatives=None,
                        num_samples=DEFAULT_NUM_SAMPLES, seed=0) -> SegmentEstimate:
    """Denoised average of the stationary stretch between change-points ``t1`` and ``t2``.

    ``lambda_prime`` may be given directly; otherwise it is
    ``(sigma / sqrt(m)) * lambda_star`` with ``lambda_star`` either supplied
    or estimated from ``representatives``. ``sigma`` defaults to ``obs.sigma``.
    """
    m = t2 - t1 - 2 * theta
    if m < 1:
        raise ConfigError(f"interval ({t1}, {t2}) is too short for theta={theta}: need t2 - t1 > 2*theta")
    if t1 < 0 or t2 > obs.n:
        raise ConfigError(f"interval ({t1}, {t2}) outside [0, {obs.n}]")
    reg = get_regularizer(reg, obs.shape)
    sigma = obs.sigma if sigma is None else sigma
    lam = _lambda_prime(reg, m, lambda_prime, lambda_star, sigma, representatives, num_samples, seed)
    # 1-based t1+theta+1 .. t2-theta  ->  0-based rows t1+theta .. t2-theta-1
    ybar = obs.data[t1 + theta:t2 - theta].mean(axis=0)
    return SegmentEstimate((t1 + theta + 1, t2 - theta), reg.prox_array(ybar, lam), lam, m)


def reconstruct_all(obs: ObservationSequence, estimates, theta, reg, **kwargs):
    """Reconstruct every stretch between consecutive estimates (and the sequence ends).

    Intervals of length ``<= 2 theta`` are skipped with a
    :class:`ShortSegmentWarning`.
    """
    bounds = [0] + sorted(int(t) for t in estimates) + [obs.n]
    out = []
    for t1, t2 in zip(bounds[:-1], bounds[1:]):
        if t2 - t1 <= 2 * theta:
            warnings.warn(f"skipping interval ({t1}, {t2}): length {t2 - t1} <= 2*theta", ShortSegmentWarning, stacklevel=2)
            continue
        out.append(reconstruct_segment(obs, t1, t2, theta, reg, **kwargs))
    return out


class SegmentReconstructor(BaseEstimator):
    """Estimator wrapper: ``fit(Y, change_points)`` then ``predict()`` the piecewise signal.

    Rows inside the ``theta`` buffers around each change-point are left as NaN.
    """

    def __init__(self, theta=10, prox="l1", lambda_prime=None, lambda_star=None, sigma=None, shape=None):
        self.theta = theta
        self.prox = prox
        self.lambda_prime = lambda_prime
        self.lambda_star = lambda_star
        self.sigma = sigma
        self.shape = shape

    def fit(self, X, change_points=()):
        X = check_array(X)
        shape = self.shape if self.shape is not None else (X.shape[1],)
        obs = ObservationSequence(X, shape, sigma=self.sigma)
        self.segments_ = reconstruct_all(
            obs, change_points, self.theta, self.prox,
            lambda_prime=self.lambda_prime, lambda_star=self.lambda_star, sigma=self.sigma,
        )
        self.n_samples_ = X.shape[0]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X=None):
        check_is_fitted(self, "segments_")
        out = np.full((self.n_samples_, self.n_features_in_), np.nan)
        for seg in self.segments_:
            lo, hi = seg.interval
            out[lo - 1:hi] = seg.x_bar
        return out

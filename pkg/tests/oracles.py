"""Reference implementations that share no code with the package.

They are slow or numerically naive on purpose and are only used to check
the package on small inputs.
"""

import math

import numpy as np

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_l1_prox(y, lam, iters=120):
    """Coordinate-wise minimizer of 0.5 (y - x)^2 + lam |x| by golden-section search.

    Points are compared with the exact difference
    f(a) - f(b) = 0.5 (a - b)(a + b - 2y) + lam (|a| - |b|)
    so the comparison does not lose precision near the minimum.
    """
    y = np.asarray(y, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), y.shape)
    a = np.minimum(y, 0.0) - 1.0
    b = np.maximum(y, 0.0) + 1.0
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    for _ in range(iters):
        diff = 0.5 * (c - d) * (c + d - 2.0 * y) + lam * (np.abs(c) - np.abs(d))
        left = diff <= 0  # f(c) <= f(d): the minimum is in [a, d]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
    return 0.5 * (a + b)


def gram_svt(Y, lam):
    """Singular value thresholding through the eigendecomposition of Y'Y.

    X = Y h(Y'Y) with h(mu) = max(1 - lam / sqrt(mu), 0).
    """
    Y = np.asarray(Y, dtype=float)
    mu, V = np.linalg.eigh(Y.T @ Y)
    mu = np.maximum(mu, 0.0)
    with np.errstate(divide="ignore"):
        h = np.where(mu > 0, np.maximum(1.0 - lam / np.sqrt(mu), 0.0), 0.0)
    return Y @ (V * h) @ V.T


def window_means(Y, theta):
    """Direct (non-incremental) means of Y[i .. i+theta-1]."""
    Y = np.asarray(Y, dtype=float).reshape(len(Y), -1)
    return np.array([Y[i:i + theta].mean(axis=0) for i in range(len(Y) - theta + 1)])


def filtered_derivative_scalar(y, theta):
    """|mean(y[t+1..t+theta]) - mean(y[t-theta+1..t])| for 1-based t in [theta, n-theta]."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    out = {}
    for t in range(theta, n - theta + 1):
        right = sum(y[t:t + theta]) / theta
        left = sum(y[t - theta:t]) / theta
        out[t] = abs(right - left)
    return out


def l1_subdiff_dist_bruteforce(x_ref, g, lam, grid=2001):
    """dist(g, lam * subdiff ||x_ref||_1) by a grid over the free coordinates (2-D only)."""
    x_ref = np.asarray(x_ref, dtype=float)
    g = np.asarray(g, dtype=float)
    w = np.linspace(-1.0, 1.0, grid)
    axes = [np.array([np.sign(v)]) if v != 0 else w for v in x_ref]
    mesh = np.meshgrid(*axes, indexing="ij")
    Z = np.stack([m.ravel() for m in mesh], axis=1) * lam
    return float(np.min(np.linalg.norm(Z - g, axis=1)))


def expected_abs_shift(lam):
    """E |g - lam| for g ~ N(0, 1), in closed form."""
    phi = math.exp(-lam * lam / 2.0) / math.sqrt(2.0 * math.pi)
    Phi = 0.5 * (1.0 + math.erf(lam / math.sqrt(2.0)))
    return lam * (2.0 * Phi - 1.0) + 2.0 * phi

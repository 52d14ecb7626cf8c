import numpy as np
import pytest
from sklearn.base import clone

from atomcpd import CapabilityError, ConfigError, NumericalError
from atomcpd.regularizers import (
    IdentityRegularizer,
    L1Regularizer,
    NuclearRegularizer,
    ProximalDenoiser,
    ScaledNuclearBallRegularizer,
    canonical_id,
    gauge,
    get_regularizer,
    prox,
    soft_threshold,
    subdiff_dist,
    svd,
)
from oracles import golden_l1_prox, gram_svt, l1_subdiff_dist_bruteforce


def test_gauge_examples():
    assert gauge(L1Regularizer(3), [1, -2, 0]) == 3
    assert gauge(NuclearRegularizer((2, 2)), np.diag([3.0, 4.0])) == pytest.approx(7.0, abs=1e-12)
    assert gauge(IdentityRegularizer(3), [5, 6, 7]) == 0
    assert gauge(ScaledNuclearBallRegularizer((2, 2)), np.diag([3.0, 4.0])) == pytest.approx(3.5)


def test_l1_prox_example_against_golden_oracle():
    res = prox(L1Regularizer(3), [3.0, -1.0, 0.5], 1.0)
    np.testing.assert_allclose(res.x_hat, [2.0, 0.0, 0.0], atol=0)
    np.testing.assert_allclose(res.x_hat, golden_l1_prox([3.0, -1.0, 0.5], 1.0), atol=1e-8)
    assert res.objective == pytest.approx(0.5 * (1 + 1 + 0.25) + 2.0)


def test_nuclear_prox_example():
    res = prox(NuclearRegularizer((3, 3)), np.diag([3.0, -1.0, 0.5]), 1.0)
    np.testing.assert_allclose(res.x_hat.reshape(3, 3), np.diag([2.0, 0, 0]), atol=1e-12)
    np.testing.assert_allclose(res.x_hat.reshape(3, 3), gram_svt(np.diag([3.0, -1.0, 0.5]), 1.0), atol=1e-12)


@pytest.mark.parametrize("reg", [IdentityRegularizer(6), L1Regularizer(6), NuclearRegularizer((2, 3)),
                                 ScaledNuclearBallRegularizer((2, 3), radius=2.0)])
def test_zero_lambda_is_identity(reg):
    y = np.random.default_rng(1).standard_normal(6)
    np.testing.assert_allclose(reg.prox_array(y, 0.0), y, atol=1e-12)


def test_negative_lambda_rejected():
    with pytest.raises(ConfigError):
        L1Regularizer(2).prox([1, 2], -0.1)


def test_scaled_ball_is_nuclear_with_rescaled_lambda():
    rng = np.random.default_rng(2)
    Y = rng.standard_normal((5, 5))
    a = ScaledNuclearBallRegularizer((5, 5)).prox_array(Y, 2.0)
    b = NuclearRegularizer((5, 5)).prox_array(Y, 2.0 / 5)
    np.testing.assert_allclose(a, b, atol=1e-12)
    with pytest.raises(ConfigError):
        ScaledNuclearBallRegularizer((2, 3))


def test_l1_prox_matches_nuclear_on_diagonals():
    rng = np.random.default_rng(3)
    for _ in range(50):
        d = rng.integers(1, 8)
        v = rng.standard_normal(d) * 3
        lam = rng.uniform(0, 2)
        a = L1Regularizer(d).prox_array(v, lam)
        b = NuclearRegularizer((d, d)).prox_array(np.diag(v), lam).reshape(d, d)
        # the nuclear prox keeps the sign through the singular vectors
        np.testing.assert_allclose(b, np.diag(a), atol=1e-8)


def test_subdiff_dist_examples():
    l1 = L1Regularizer(2)
    assert l1.subdiff_dist([1.0, 0.0], [0.0, 0.0], 1.0) == pytest.approx(1.0)
    assert l1_subdiff_dist_bruteforce([1.0, 0.0], [0.0, 0.0], 1.0) == pytest.approx(1.0)
    g = np.array([0.3, -2.0])
    assert l1.subdiff_dist([5.0, -1.0], g, 0.0) == pytest.approx(np.linalg.norm(g))
    nuc = NuclearRegularizer((2, 2))
    assert nuc.subdiff_dist(np.diag([1.0, 0.0]), np.zeros((2, 2)), 1.0) == pytest.approx(1.0)


def test_l1_subdiff_dist_matches_bruteforce():
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rng.choice([-1.0, 0.0, 2.0], size=2)
        g = rng.standard_normal(2) * 2
        lam = rng.uniform(0.1, 2)
        assert subdiff_dist(L1Regularizer(2), x, g, lam) == pytest.approx(
            l1_subdiff_dist_bruteforce(x, g, lam), abs=5e-3)


def test_subdiff_dist_at_zero_is_shrinkage_norm():
    rng = np.random.default_rng(5)
    g = rng.standard_normal(10)
    assert L1Regularizer(10).subdiff_dist(np.zeros(10), g, 0.7) == pytest.approx(
        np.linalg.norm(soft_threshold(g, 0.7)))
    G = rng.standard_normal((4, 4))
    s = np.linalg.svd(G, compute_uv=False)
    assert NuclearRegularizer((4, 4)).subdiff_dist(np.zeros((4, 4)), G, 0.7) == pytest.approx(
        np.linalg.norm(np.maximum(s - 0.7, 0)))


@pytest.mark.parametrize("reg, x", [
    (L1Regularizer(30), np.r_[np.ones(3), -2 * np.ones(2), np.zeros(25)]),
    (NuclearRegularizer((6, 5)), np.outer(np.arange(1.0, 7), np.ones(5))),
    (ScaledNuclearBallRegularizer((5, 5)), np.diag([2.0, 1.0, 0, 0, 0])),
])
def test_profile_matches_direct_distance(reg, x):
    G = np.random.default_rng(6).standard_normal((40, reg.p))
    lams = np.array([0.0, 0.3, 1.0, 4.0])
    prof = reg.subdiff_profile(x, G).dist(lams)
    direct = np.array([[reg.subdiff_dist(x, g, lam) for lam in lams] for g in G])
    np.testing.assert_allclose(prof, direct, atol=1e-9)


def test_identity_has_no_subdifferential():
    with pytest.raises(CapabilityError):
        IdentityRegularizer(3).subdiff_dist(np.ones(3), np.ones(3), 1.0)


def test_svd_contract():
    rng = np.random.default_rng(7)
    for shape in [(1, 1), (3, 7), (32, 32), (512, 512)]:
        A = rng.standard_normal(shape)
        U, s, Vt = svd(A)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
        assert np.linalg.norm(U * s @ Vt - A) <= 1e-8 * np.linalg.norm(A)
    with pytest.raises(NumericalError):
        svd(np.array([[np.nan, 1.0], [0.0, 1.0]]))


@pytest.mark.parametrize("reg", [L1Regularizer(12), NuclearRegularizer((3, 4))])
def test_prox_first_order_optimality(reg):
    rng = np.random.default_rng(8)
    for _ in range(5):
        y = rng.standard_normal(12) * 2
        lam = rng.uniform(0.1, 1.5)
        x = reg.prox_array(y, lam)
        f = lambda z: 0.5 * np.sum((y - z) ** 2) + lam * reg.gauge(z)
        base = f(x)
        for _ in range(100):
            delta = rng.standard_normal(12)
            delta *= 1e-3 / np.linalg.norm(delta)
            assert base <= f(x + delta) + 1e-12


def test_l1_subgradient_monotone():
    rng = np.random.default_rng(9)
    reg = L1Regularizer(8)
    for _ in range(1000):
        x1, x2 = rng.standard_normal((2, 8)) * rng.integers(0, 2, size=(2, 8))
        z1, z2 = reg.subgradient(x1), reg.subgradient(x2)
        assert np.dot(z1 - z2, x1 - x2) >= -1e-12


@pytest.mark.parametrize("reg", [L1Regularizer(10), NuclearRegularizer((2, 5))])
def test_differencing_sqrt2_lipschitz(reg):
    rng = np.random.default_rng(10)
    x0, x1 = rng.standard_normal((2, 10))
    lam = 0.8
    j = lambda e0, e1: np.linalg.norm(reg.prox_array(x0 + e0, lam) - reg.prox_array(x1 + e1, lam))
    for _ in range(500):
        a0, a1, b0, b1 = rng.standard_normal((4, 10))
        lhs = abs(j(a0, a1) - j(b0, b1))
        rhs = np.sqrt(2) * np.linalg.norm(np.r_[a0 - b0, a1 - b1])
        assert lhs <= rhs + 1e-10


def test_registry_and_aliases():
    assert canonical_id("none") == "identity"
    assert canonical_id("nuclear-ball") == "nuclear_ball_scaled"
    assert isinstance(get_regularizer("nuclear-ball", (3, 3)), ScaledNuclearBallRegularizer)
    with pytest.raises(ConfigError):
        get_regularizer("tv", (3,))
    with pytest.raises(ConfigError):
        NuclearRegularizer((9,))
    assert L1Regularizer(2).kappa == 1 and NuclearRegularizer((2, 2)).kappa == 1


def test_proximal_denoiser_estimator():
    den = ProximalDenoiser(prox="l1", lam=1.0)
    out = den.fit_transform([[3.0, -1.0, 0.5], [0.0, 2.5, -4.0]])
    np.testing.assert_allclose(out, [[2, 0, 0], [0, 1.5, -3]])
    assert clone(den).get_params() == {"prox": "l1", "lam": 1.0, "shape": None}
    nuc = ProximalDenoiser(prox="nuclear", lam=1.0, shape=(3, 3)).fit(np.zeros((1, 9)))
    np.testing.assert_allclose(nuc.transform(np.diag([3.0, -1, 0.5]).reshape(1, -1)).reshape(3, 3),
                               np.diag([2.0, 0, 0]), atol=1e-12)
    with pytest.raises(ValueError):
        nuc.transform(np.zeros((1, 4)))

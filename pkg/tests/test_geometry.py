import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from kme_lab.errors import ArgumentError, InternalConsistencyError, PreconditionError, UnsupportedCaseError
from kme_lab.geometry import (
    IsotropicGaussian,
    TwoPointDiscrete,
    WeightedPointMeasure,
    clamp_nonnegative,
    l2_discrete_dist2,
    l2_gauss_dist2,
    l2_gauss_inner,
    l2_empirical_vs_gauss,
    l2_weighted,
    mmd_empirical_vs_gauss,
    mmd_weighted,
    rkhs_discrete_dist2,
    rkhs_gauss_dist2,
    rkhs_gauss_inner,
    rkhs_point_gauss_inner,
)
from kme_lab.kernels import (
    eval_psi,
    gaussian_kernel,
    gaussian_mixture_kernel,
    imq_kernel,
    kernel_constants,
    matern_kernel,
    spectral_density,
)
from kme_lab.oracles import gauss_hermite_expect

G1 = gaussian_kernel(1.0, 1)


def gauss(mu, s2=1.0):
    return IsotropicGaussian(np.atleast_1d(np.asarray(mu, dtype=float)), s2)


def test_rkhs_gauss_dist2_value():
    got = rkhs_gauss_dist2(G1, gauss(0.0), gauss(1.0))
    assert got == pytest.approx(2 / math.sqrt(3) * (1 - math.exp(-1 / 6)), rel=1e-14)


def test_rkhs_dist2_zero_and_limit():
    k = imq_kernel(1.0, 2.0, 2)
    g = gauss([0.3, -0.2], 0.7)
    assert rkhs_gauss_dist2(k, g, gauss([0.3, -0.2], 0.7)) == 0.0
    self_ip = rkhs_gauss_inner(k, g, g)
    far = rkhs_gauss_dist2(k, g, gauss([1e4, 0.0], 0.7))
    assert far == pytest.approx(2 * self_ip, rel=1e-6)


@pytest.mark.parametrize("k", [G1, gaussian_mixture_kernel([0.5, 0.5], [0.4, 2.0], 1),
                               imq_kernel(1.0, 1.5, 1), matern_kernel(1.5, 2.0, 1)])
def test_polarization(k):
    g0, g1 = gauss(0.2, 0.5), gauss(-0.9, 0.5)
    lhs = rkhs_gauss_dist2(k, g0, g1)
    rhs = rkhs_gauss_inner(k, g0, g0) + rkhs_gauss_inner(k, g1, g1) - 2 * rkhs_gauss_inner(k, g0, g1)
    assert lhs == pytest.approx(rhs, abs=1e-12)
    if kernel_constants(k).C_k_l2 is not None:
        lhs = l2_gauss_dist2(k, g0, g1)
        rhs = l2_gauss_inner(k, g0, g0) + l2_gauss_inner(k, g1, g1) - 2 * l2_gauss_inner(k, g0, g1)
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_symmetry():
    k = matern_kernel(1.0, 2.5, 2)
    g0, g1 = gauss([0.0, 1.0], 0.3), gauss([0.5, 0.0], 0.3)
    assert rkhs_gauss_dist2(k, g0, g1) == pytest.approx(rkhs_gauss_dist2(k, g1, g0), rel=1e-14)
    assert l2_gauss_dist2(k, g0, g1) == pytest.approx(l2_gauss_dist2(k, g1, g0), rel=1e-14)


@pytest.mark.parametrize("k", [G1, imq_kernel(1.0, 2.0, 1)])
def test_monotone_in_separation(k):
    grid = np.linspace(0.0, 6.0, 40)
    r = [rkhs_gauss_dist2(k, gauss(0.0, 0.5), gauss(x, 0.5)) for x in grid]
    l2 = [l2_gauss_dist2(k, gauss(0.0, 0.5), gauss(x, 0.5)) for x in grid]
    assert np.all(np.diff(r) >= 0)
    assert np.all(np.diff(l2) >= 0)


def test_gaussian_kernel_exact_law():
    k = gaussian_kernel(0.8, 2)
    s2 = 0.6

    def f(x):
        return rkhs_gauss_dist2(k, gauss([0.0, 0.0], s2), gauss([math.sqrt(x), 0.0], s2))

    a, b = f(1.0), f(2.0)
    # C1 (1 - q), C1 (1 - q^2) with q = exp(-C2)
    q = b / a - 1.0
    c2 = -math.log(q)
    c1 = a / (1.0 - q)
    assert abs(f(3.7) - c1 * (1.0 - math.exp(-c2 * 3.7))) <= 1e-10


def test_unequal_variances_rejected():
    with pytest.raises(UnsupportedCaseError):
        rkhs_gauss_dist2(G1, gauss(0.0, 1.0), gauss(1.0, 2.0))
    with pytest.raises(UnsupportedCaseError):
        l2_gauss_dist2(G1, gauss(0.0, 1.0), gauss(1.0, 2.0))


def test_dimension_mismatch_rejected():
    with pytest.raises(ArgumentError):
        rkhs_gauss_dist2(G1, gauss([0.0, 0.0]), gauss([1.0, 0.0]))


def test_type_invariants():
    with pytest.raises(ArgumentError):
        IsotropicGaussian(np.zeros(1), 0.0)
    with pytest.raises(ArgumentError):
        TwoPointDiscrete(np.zeros(1), np.zeros(1), 0.5)
    with pytest.raises(ArgumentError):
        TwoPointDiscrete(np.zeros(1), np.ones(1), 1.0)
    with pytest.raises(ArgumentError):
        WeightedPointMeasure(np.zeros((2, 1)), np.array([0.5, 0.6]))


def test_point_gauss_inner():
    assert rkhs_point_gauss_inner(G1, np.zeros(1), gauss(0.0)) == pytest.approx(1 / math.sqrt(2), rel=1e-14)
    x = np.array([0.4])
    gh = gauss_hermite_expect(lambda y: eval_psi(G1, np.sum((y - x) ** 2, axis=1)), gauss(-0.3, 0.8))
    assert rkhs_point_gauss_inner(G1, x, gauss(-0.3, 0.8)) == pytest.approx(gh, abs=1e-8)
    tiny = rkhs_point_gauss_inner(G1, x, gauss(-0.3, 1e-12))
    assert tiny == pytest.approx(float(eval_psi(G1, 0.49)), rel=1e-9)


def test_point_gauss_inner_is_linear_in_nu():
    a, b = gaussian_kernel(1.0, 2), gaussian_kernel(0.5, 2)
    mix = gaussian_mixture_kernel([1.0, 1.0], [1.0, 0.5], 2)
    x, g = np.array([0.2, 0.1]), gauss([1.0, -1.0], 0.4)
    assert rkhs_point_gauss_inner(mix, x, g) == pytest.approx(
        rkhs_point_gauss_inner(a, x, g) + rkhs_point_gauss_inner(b, x, g), rel=1e-14)


def test_point_gauss_inner_density_kernel_vs_hermite():
    k = imq_kernel(1.0, 1.5, 2)
    x, g = np.array([0.3, -0.5]), gauss([0.0, 0.2], 0.5)
    gh = gauss_hermite_expect(lambda y: eval_psi(k, np.sum((y - x) ** 2, axis=1)), g, order=40)
    assert rkhs_point_gauss_inner(k, x, g) == pytest.approx(gh, rel=1e-7)


def test_discrete_dist2():
    x, v = np.array([0.0, 0.0]), np.array([1.0, 1.0])
    k = gaussian_kernel(1.0, 2)
    p0, p1 = TwoPointDiscrete(x, v, 0.8), TwoPointDiscrete(x, v, 0.5)
    expected = 2 * 0.09 * (1 - math.exp(-1))
    assert rkhs_discrete_dist2(k, p0, p1) == pytest.approx(expected, rel=1e-12)
    pts = np.array([x, v])
    w = np.array([0.3, -0.3])
    gram = eval_psi(k, np.sum((pts[:, None] - pts[None]) ** 2, axis=-1))
    assert rkhs_discrete_dist2(k, p0, p1) == pytest.approx(w @ gram @ w, rel=1e-12)
    assert rkhs_discrete_dist2(k, p1, TwoPointDiscrete(x, v, 0.5)) == 0.0
    with pytest.raises(UnsupportedCaseError):
        rkhs_discrete_dist2(k, p0, TwoPointDiscrete(x, np.array([2.0, 0.0]), 0.5))


def test_discrete_dist2_lower_bound_at_median_scale():
    k = imq_kernel(1.0, 2.0, 1)
    from kme_lab.bounds import alpha_for
    t1, alpha = alpha_for(k)
    x, v = np.zeros(1), np.array([1 / math.sqrt(t1)])
    val = rkhs_discrete_dist2(k, TwoPointDiscrete(x, v, 0.7), TwoPointDiscrete(x, v, 0.4))
    assert val >= 2 * 0.09 * alpha / 2


def test_mmd_weighted_matches_gram():
    rng = np.random.default_rng(3)
    k = imq_kernel(1.0, 1.5, 3)
    a_pts, b_pts = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    a_w, b_w = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
    A, B = WeightedPointMeasure(a_pts, a_w), WeightedPointMeasure(b_pts, b_w)
    pts = np.vstack([a_pts, b_pts])
    w = np.concatenate([a_w, -b_w])
    gram = eval_psi(k, np.sum((pts[:, None] - pts[None]) ** 2, axis=-1))
    assert mmd_weighted(k, A, B) == pytest.approx(w @ gram @ w, rel=1e-10)
    assert mmd_weighted(k, A, A) == 0.0


def test_mmd_weighted_reproduces_two_point():
    x, v = np.array([0.1]), np.array([0.9])
    k = matern_kernel(1.0, 1.5, 1)
    p0, p1 = TwoPointDiscrete(x, v, 0.9), TwoPointDiscrete(x, v, 0.2)
    assert mmd_weighted(k, p0.as_weighted(), p1.as_weighted()) == pytest.approx(
        rkhs_discrete_dist2(k, p0, p1), abs=1e-12)


def test_empirical_vs_gauss_single_point():
    s = WeightedPointMeasure.uniform(np.zeros((1, 1)))
    expected = 1 - 2 / math.sqrt(2) + 1 / math.sqrt(3)
    assert mmd_empirical_vs_gauss(G1, s, gauss(0.0)) == pytest.approx(expected, rel=1e-13)


def test_empirical_vs_gauss_collapsed_target():
    s = WeightedPointMeasure.uniform(np.full((4, 2), 0.5))
    k = gaussian_kernel(1.0, 2)
    assert mmd_empirical_vs_gauss(k, s, gauss([0.5, 0.5], 1e-14)) < 1e-12


def test_empirical_vs_gauss_general_weights():
    rng = np.random.default_rng(0)
    k = imq_kernel(1.0, 2.0, 2)
    pts = rng.normal(size=(6, 2))
    w = rng.dirichlet(np.ones(6))
    g = gauss([0.1, 0.1], 0.5)
    val = mmd_empirical_vs_gauss(k, WeightedPointMeasure(pts, w), g)
    gram = eval_psi(k, np.sum((pts[:, None] - pts[None]) ** 2, axis=-1))
    cross = np.array([rkhs_point_gauss_inner(k, p, g) for p in pts])
    assert val == pytest.approx(w @ gram @ w - 2 * w @ cross + rkhs_gauss_inner(k, g, g), rel=1e-10)


def test_l2_gauss_dist2_value():
    got = l2_gauss_dist2(G1, gauss(0.0), gauss(1.0))
    assert got == pytest.approx(2 * math.sqrt(math.pi / 2) * (1 - math.exp(-1 / 8)), rel=1e-13)


def test_l2_gauss_dist2_by_direct_integration():
    # theta_i(y) = (psi * N(mu_i, s2))(y) in closed form for a Gaussian kernel
    s2 = 0.5
    a = 1 + 2 * 0.5 * s2

    def theta(y, mu):
        return a ** -0.5 * np.exp(-0.5 * (y - mu) ** 2 / a)

    val, _ = integrate.quad(lambda y: (theta(y, 0.0) - theta(y, 1.3)) ** 2, -40, 40, limit=200)
    assert l2_gauss_dist2(G1, gauss(0.0, s2), gauss(1.3, s2)) == pytest.approx(val, rel=1e-9)


def test_l2_weak_norm_chain():
    rng = np.random.default_rng(11)
    for k in (gaussian_kernel(1.0, 2), imq_kernel(1.0, 2.0, 2), matern_kernel(1.0, 2.0, 2)):
        # spectral_density carries the (2 pi)^(-d/2) normalisation, so the sup of the
        # unitary transform of psi is (2 pi)^(d/2) times lambda(0)
        lam0 = (2 * math.pi) ** (k.d / 2) * spectral_density(k, 0.0)
        for _ in range(4):
            g0 = gauss(rng.normal(size=2), 0.4)
            g1 = gauss(rng.normal(size=2), 0.4)
            assert l2_gauss_dist2(k, g0, g1) <= lam0 * rkhs_gauss_dist2(k, g0, g1) * (1 + 1e-10)


def test_l2_moment_condition_required():
    with pytest.raises(PreconditionError):
        l2_gauss_dist2(imq_kernel(1.0, 1.0, 2), gauss([0.0, 0.0]), gauss([1.0, 0.0]))


def test_l2_discrete_dist2():
    k = gaussian_kernel(1.0, 1)
    x, v = np.array([0.0]), np.array([1.5])
    p0, p1 = TwoPointDiscrete(x, v, 0.7), TwoPointDiscrete(x, v, 0.3)

    def diff(y):
        return eval_psi(k, (y - x[0]) ** 2) - eval_psi(k, (y - v[0]) ** 2)

    val, _ = integrate.quad(lambda y: diff(y) ** 2, -40, 40, limit=200)
    assert l2_discrete_dist2(k, p0, p1) == pytest.approx(0.16 * val, rel=1e-9)
    assert l2_discrete_dist2(k, p0, TwoPointDiscrete(x, v, 0.7)) == 0.0


def test_l2_discrete_strictly_positive():
    k = imq_kernel(1.0, 2.0, 1)
    x = np.zeros(1)
    for z in np.geomspace(1e-3, 30, 12):
        val = l2_discrete_dist2(k, TwoPointDiscrete(x, np.array([z]), 0.6), TwoPointDiscrete(x, np.array([z]), 0.5))
        assert val > 0


def test_l2_weighted_and_empirical():
    k = gaussian_kernel(1.0, 1)
    pts = np.array([[0.0], [0.5], [2.0]])
    A = WeightedPointMeasure(pts, np.array([0.2, 0.3, 0.5]))
    B = WeightedPointMeasure(pts, np.array([0.5, 0.25, 0.25]))
    w = A.weights - B.weights

    def f(y):
        return sum(wi * eval_psi(k, (y - p[0]) ** 2) for wi, p in zip(w, pts))

    val, _ = integrate.quad(lambda y: f(y) ** 2, -40, 40, limit=200)
    assert l2_weighted(k, A, B) == pytest.approx(val, rel=1e-9)
    g = gauss(0.3, 0.4)
    a = 1 + 2 * 0.5 * 0.4

    def g_emb(y):
        return a ** -0.5 * math.exp(-0.5 * (y - 0.3) ** 2 / a)

    val, _ = integrate.quad(lambda y: (sum(wi * eval_psi(k, (y - p[0]) ** 2) for wi, p in zip(A.weights, pts))
                                       - g_emb(y)) ** 2, -40, 40, limit=200)
    assert l2_empirical_vs_gauss(k, A, g) == pytest.approx(val, rel=1e-9)


def test_clamp():
    assert clamp_nonnegative(-1e-12) == 0.0
    assert clamp_nonnegative(0.3) == 0.3
    with pytest.raises(InternalConsistencyError):
        clamp_nonnegative(-1e-6)


def test_tiny_separation_keeps_precision():
    k = gaussian_kernel(1.0, 1)
    eps = 1e-9
    got = rkhs_gauss_dist2(k, gauss(0.0), gauss(eps))
    expected = 2 / math.sqrt(3) * -math.expm1(-0.5 * eps * eps / 3)
    assert got == pytest.approx(expected, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 3.0))
def test_rkhs_dist2_bounded_by_twice_self(m0, m1, s2):
    k = imq_kernel(1.0, 1.5, 1)
    g0, g1 = gauss(m0, s2), gauss(m1, s2)
    val = rkhs_gauss_dist2(k, g0, g1)
    assert 0.0 <= val <= 2 * rkhs_gauss_inner(k, g0, g0) + 1e-14

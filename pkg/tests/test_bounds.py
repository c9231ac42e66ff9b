import math

import numpy as np
import pytest
from scipy import integrate

from kme_lab.bounds import (
    BoundReport,
    alpha_for,
    ak_for,
    bk_for,
    bound_cor10,
    bound_cor2,
    bound_thm1,
    bound_thm12,
    bound_thm13,
    bound_thm6,
    bound_thm8,
    bound_thm9,
    bound_thmE1,
    constants_table,
    convexity_objective,
    estimate_cpsi_eps,
    find_z_beta,
    sandwich,
    sphere_grid,
    thm8_construction,
    thmE1_sample_size,
)
from kme_lab.errors import ArgumentError, PreconditionError
from kme_lab.kernels import (
    custom_kernel,
    eval_psi,
    gaussian_kernel,
    gaussian_mixture_kernel,
    imq_kernel,
    matern_kernel,
    nu_interval_mass,
)

GAUSS = gaussian_kernel(1.0, 1)
MIX = gaussian_mixture_kernel([0.4, 0.6], [0.5, 2.0], 2)


def test_find_z_beta_gaussian():
    z2, beta = find_z_beta(gaussian_kernel(1.0, 3))
    assert beta == 0.5
    assert float(eval_psi(gaussian_kernel(1.0, 3), 0.0) - eval_psi(gaussian_kernel(1.0, 3), z2)) >= beta


def test_find_z_beta_mixture_and_scaling():
    _, beta = find_z_beta(MIX)
    assert beta == pytest.approx(0.5)
    base = custom_kernel(1, atoms=[(0.5, 1.0), (2.0, 1.0)])
    scaled = custom_kernel(1, atoms=[(0.5, 3.0), (2.0, 3.0)])
    assert find_z_beta(scaled)[1] == pytest.approx(3 * find_z_beta(base)[1])


def test_find_z_beta_callable():
    def psi(r2):
        return 1.0 / (1.0 + r2) + 0.3 * math.exp(-(r2 - 4.0) ** 2)

    z2, beta = find_z_beta(psi)
    assert beta > 0.5
    assert psi(0.0) - psi(z2) == pytest.approx(beta)
    with pytest.raises(PreconditionError):
        find_z_beta(lambda r2: 1.0)


def test_alpha_for_families():
    assert alpha_for(GAUSS)[1] == 1.0
    c, g = 1.5, 2.0
    t1, alpha = alpha_for(imq_kernel(c, g, 1))
    assert alpha == pytest.approx(c ** (-2 * g) / 2)
    assert nu_interval_mass(imq_kernel(c, g, 1), t1, np.inf) >= alpha * (1 - 1e-9)
    assert alpha_for(matern_kernel(1.0, 3.0, 2))[1] == 0.5


def test_thm1_and_cor2_values():
    assert bound_thm1(0.5, 50).s == pytest.approx(math.sqrt(1 / 50) / 6, rel=1e-15)
    assert bound_cor2(alpha_for(GAUSS)[1], 100).s == pytest.approx(1 / 60, rel=1e-15)
    seq = [bound_cor2(1.0, n).s for n in (1, 10, 100, 1000)]
    assert all(a > b for a, b in zip(seq, seq[1:]))
    with pytest.raises(ArgumentError):
        bound_thm1(0.0, 10)
    with pytest.raises(ArgumentError):
        bound_cor2(1.0, 0)


def test_interval_constants_gaussian_and_mixture():
    assert bk_for(gaussian_kernel(2.0, 3)).value == 1.0
    eta = 0.7
    assert ak_for(gaussian_kernel(eta, 2)).value == pytest.approx((2 * eta * eta) ** 1.0)
    k = MIX
    assert bk_for(k).value == pytest.approx(0.5 ** 2 / 2.0 ** 2)
    assert bk_for(k).value == pytest.approx(bk_for(k).beta * bk_for(k).lo / bk_for(k).hi)


def test_imq_bk_closed_form():
    c, g = 1.2, 2.5
    k = imq_kernel(c, g, 1)
    expected = c ** (-2 * g) / (2 * math.gamma(g)) * (g / (2 * math.e)) ** g
    assert bk_for(k).value == pytest.approx(expected, rel=1e-14)
    t0, t1, beta, _ = bk_for(k)
    assert nu_interval_mass(k, t0, t1) >= beta


@pytest.mark.parametrize("k", [gaussian_kernel(1.3, 2), MIX, imq_kernel(1.0, 0.6, 1), imq_kernel(0.8, 3.0, 2),
                               matern_kernel(1.0, 1.4, 2), matern_kernel(2.0, 4.0, 3),
                               custom_kernel(2, atoms=[(0.2, 1.0), (1.0, 0.5), (4.0, 2.0)])])
def test_constants_table_mass_checks(k):
    rows = constants_table(k)
    assert {r["constant"] for r in rows} == {"alpha", "B_k", "A_k", "B_k_l2"}
    assert all(r["mass_check"] for r in rows)
    by = {r["constant"]: r for r in rows}
    assert by["B_k"]["matches_definition"]
    if k.label != "matern":
        assert by["A_k"]["matches_definition"] and by["B_k_l2"]["matches_definition"]
    else:
        # tabulated Matern values are smaller than the defining expression by 2^d
        for name in ("A_k", "B_k_l2"):
            assert by[name]["value"] * 2 ** k.d == pytest.approx(by[name]["from_definition"], rel=1e-12)


def test_thm8_value_and_scaling():
    for eta in (0.3, 1.0, 4.0):
        r = bound_thm8(gaussian_kernel(eta, 1), 1, 100)
        assert r.s == pytest.approx(math.sqrt(0.01 / math.e / 3) / 50, rel=1e-14)
        assert r.floor == 0.2 and r.applicable
    k = imq_kernel(1.0, 2.0, 2)
    assert bound_thm8(k, 2, 400).s == pytest.approx(bound_thm8(k, 2, 100).s / 2, rel=1e-14)
    factors = [bound_thm8(gaussian_kernel(1.0, d), d, 1).s for d in range(1, 30)]
    assert all(a < b for a, b in zip(factors, factors[1:]))
    assert factors[-1] < math.sqrt(1 / math.e) / 50


def test_thm8_dimension_mismatch():
    with pytest.raises(ArgumentError):
        bound_thm8(GAUSS, 2, 10)


def test_construction_slope_dominates_theorem():
    for k in (GAUSS, MIX, imq_kernel(1.0, 2.0, 2), matern_kernel(1.0, 3.0, 2)):
        for norm, bound in (("rkhs", bound_thm8), ("l2", bound_thm13)):
            cons = thm8_construction(k, 100, norm)
            assert cons["s_proof"] >= bound(k, k.d, 100).s * (1 - 1e-12)


def test_thm9_positive_constant():
    k = imq_kernel(1.0, 2.0, 1)
    for z2 in (1e-4, 1.0, 100.0):
        r = bound_thm9(k, z2, 10)
        assert r.inputs["C_z"] > 0 and r.s > 0
    with pytest.raises(PreconditionError):
        bound_thm9(imq_kernel(1.0, 0.5, 2), 1.0, 10)


def test_cor10_gaussian_value():
    r = bound_cor10(GAUSS, 1, 100)
    assert r.s == pytest.approx(math.pi ** 0.25 / 60, rel=1e-14)
    assert r.applicable


def test_cor10_independent_from_ak():
    k = imq_kernel(1.0, 2.0, 1)
    d0, d1, beta, _ = ak_for(k)
    a_def = beta ** 2 * d1 ** -0.5
    expected = math.sqrt(a_def * math.pi ** 0.5 / 2 ** 0.5 / 100) / 6
    assert bound_cor10(k, 1, 100).s == pytest.approx(expected, rel=1e-12)


def test_thm13_scaling_and_gate():
    k = matern_kernel(1.0, 2.5, 1)
    assert bound_thm13(k, 1, 900).s == pytest.approx(bound_thm13(k, 1, 100).s / 3, rel=1e-14)
    with pytest.raises(PreconditionError):
        bound_thm13(imq_kernel(1.0, 1.0, 2), 2, 10)


def test_thmE1_relation_and_boundary():
    assert thmE1_sample_size(GAUSS) == pytest.approx(24.0)
    assert bound_thmE1(GAUSS, 1, 24).applicable
    assert not bound_thmE1(GAUSS, 1, 23).applicable
    for k in (GAUSS, MIX, imq_kernel(1.0, 2.0, 2)):
        for n in (10, 1000):
            assert abs(bound_thmE1(k, k.d, n).s - bound_thm8(k, k.d, n).s / math.sqrt(2)) <= 1e-12


def test_thm6_boundary_and_fallback():
    eps = 0.3
    n_star = math.ceil(1 / eps)
    assert bound_thm6(0.1, eps, n_star).applicable
    low = bound_thm6(0.1, eps, n_star - 1)
    assert not low.applicable and "fallback_s" in low.inputs
    assert bound_thm6(0.2, 1.0, 40).s == pytest.approx(bound_thm6(0.2, 1.0, 10).s / 2, rel=1e-14)
    assert bound_thm12(0.2, 1.0, 1).theorem == "thm12"
    assert bound_thm6(0.2, 4.0, 1).applicable
    assert bound_thm6(0.2, 1.0, 1).applicable
    assert bound_thm6(0.1, 1.0, 1).inputs.get("fallback_floor") is None
    with pytest.raises(ArgumentError):
        bound_thm6(0.0, 1.0, 10)


def test_two_point_fallback_floor():
    r = bound_thm6(0.1, 0.5, 1)
    assert not r.applicable
    eps = 0.5
    assert r.inputs["fallback_floor"] == pytest.approx(max(0.25 * math.exp(-eps / 2), (1 - math.sqrt(eps / 4)) / 2))
    assert r.inputs["fallback_s"] == pytest.approx(0.5 * math.sqrt(0.1 * eps / 2))


def test_report_serialises():
    d = bound_thm8(MIX, 2, 10).to_dict()
    assert d["theorem"] == "thm8" and isinstance(d["preconditions"], list)
    assert isinstance(bound_thm8(MIX, 2, 10), BoundReport)


def test_objective_zero_displacement_is_isotropic():
    k = imq_kernel(1.0, 2.0, 3)
    vals = [convexity_objective(k, 0.5, np.zeros(3), e) for e in sphere_grid(3)[:50]]
    assert max(vals) - min(vals) <= 1e-8


def test_objective_at_zero_gaussian_1d():
    expected = 2 / math.sqrt(2 * math.pi) * math.sqrt(math.pi) / (2 * 1.5 ** 1.5)
    direct, _ = integrate.quad(lambda w: 2 / math.sqrt(2 * math.pi) * math.exp(-w * w) * w * w * math.exp(-w * w / 2),
                               -np.inf, np.inf)
    assert expected == pytest.approx(direct, rel=1e-12)
    assert convexity_objective(GAUSS, 1.0, np.zeros(1), np.ones(1)) == pytest.approx(expected, rel=1e-12)
    est = estimate_cpsi_eps(GAUSS, 1.0)
    assert est.f0 == pytest.approx(expected, rel=1e-12)


def test_estimate_properties():
    est = estimate_cpsi_eps(gaussian_kernel(1.0, 2), 1.0)
    assert est.c_psi >= est.f0 / 2 * (1 - 1e-12)
    assert est.eps_psi > 0
    inside = np.array([math.sqrt(est.eps_psi) * 0.5, 0.0])
    for e in sphere_grid(2)[:20]:
        assert convexity_objective(gaussian_kernel(1.0, 2), 1.0, inside, e) >= est.f0 / 2 * (1 - 1e-6)


def test_dimension_decay_of_cpsi():
    eta = 1.0
    c = [estimate_cpsi_eps(gaussian_kernel(eta, d), 1.0).c_psi for d in (1, 2, 3)]
    ratio = (1 + 2 / eta ** 2) ** -0.5
    for d in (1, 2):
        assert c[d] / c[d - 1] == pytest.approx(ratio, rel=0.2)


def test_estimate_rejects_bad_args():
    with pytest.raises(ArgumentError):
        estimate_cpsi_eps(GAUSS, 1.0, mode="sup")
    with pytest.raises(ArgumentError):
        estimate_cpsi_eps(GAUSS, -1.0)


def test_sandwich_orders_bounds():
    for k in (GAUSS, imq_kernel(1.0, 2.0, 1)):
        s = sandwich(k, 100)
        assert s["rkhs_lower"] < s["rkhs_upper"]
        assert s["l2_lower"] < s["l2_upper"]

import math

import numpy as np
import pytest

from kme_lab.errors import ArgumentError, PreconditionError, ReplicateError
from kme_lab.estimator import (
    RateExperimentConfig,
    bootstrap_slope_ci,
    coverage_experiment,
    empirical_error,
    fit_loglog,
    hoeffding_bound,
    make_rng,
    resolve_jobs,
    run_rate_experiment,
    sample_target,
)
from kme_lab.geometry import IsotropicGaussian, TwoPointDiscrete, WeightedPointMeasure
from kme_lab.kernels import gaussian_kernel, imq_kernel, kernel_constants

GAUSS = gaussian_kernel(1.0, 1)
TARGET = IsotropicGaussian(np.zeros(1), 1.0)


def test_sampler_is_deterministic():
    a = sample_target(TARGET, 3, 11)
    b = sample_target(TARGET, 3, 11)
    assert np.array_equal(a.points, b.points) and a.points.shape == (3, 1)
    assert np.array_equal(a.weights, np.full(3, 1 / 3))
    assert not np.array_equal(a.points, sample_target(TARGET, 3, 12).points)
    assert np.array_equal(sample_target(TARGET, 4, (1, 2, 3)).points, sample_target(TARGET, 4, [1, 2, 3]).points)


def test_sampler_rejects_bad_input():
    with pytest.raises(ArgumentError):
        TwoPointDiscrete([0.0], [1.0], 1.0)
    with pytest.raises(ArgumentError):
        sample_target(TARGET, 0, 1)
    with pytest.raises(ArgumentError):
        make_rng(-1)


def test_sampler_clt():
    mu = np.array([0.3, -1.2])
    g = IsotropicGaussian(mu, 2.5)
    n = 10 ** 6
    pts = sample_target(g, n, 5).points
    assert np.all(np.abs(pts.mean(axis=0) - mu) <= 4 * math.sqrt(2.5 / n))


def test_two_point_sampler_frequency():
    t = TwoPointDiscrete([0.0, 1.0], [2.0, 0.0], 0.3)
    pts = sample_target(t, 200_000, 9).points
    frac = np.mean(np.all(pts == t.x, axis=1))
    assert abs(frac - 0.3) <= 4 * math.sqrt(0.21 / 200_000)


def test_error_zero_on_exact_atoms():
    t = TwoPointDiscrete([0.5], [-1.0], 0.25)
    sample = WeightedPointMeasure(np.array([[0.5], [-1.0]]), np.array([0.25, 0.75]))
    assert empirical_error(GAUSS, sample, t) == pytest.approx(0.0, abs=1e-7)
    assert empirical_error(GAUSS, sample, t, "l2") == pytest.approx(0.0, abs=1e-7)


def test_single_point_three_terms():
    eta2, s2, mu, x = 1.7, 0.6, 0.2, 1.1
    k = gaussian_kernel(math.sqrt(eta2), 1)
    g = IsotropicGaussian(np.array([mu]), s2)
    expected = (1.0 - 2.0 * (1 + s2 / eta2) ** -0.5 * math.exp(-(x - mu) ** 2 / (2 * (eta2 + s2)))
                + (1 + 2 * s2 / eta2) ** -0.5)
    err = empirical_error(k, WeightedPointMeasure.uniform(np.array([[x]])), g)
    assert err == pytest.approx(math.sqrt(expected), rel=1e-12)


def test_error_rejects_unknown_norm():
    with pytest.raises(ArgumentError):
        empirical_error(GAUSS, sample_target(TARGET, 2, 0), TARGET, "sup")


def test_hoeffding_examples():
    assert hoeffding_bound(1.0, 100, 1.0) == pytest.approx(0.1, rel=1e-15)
    assert hoeffding_bound(1.0, 100, math.exp(-0.5)) == pytest.approx(0.2, rel=1e-14)
    assert kernel_constants(gaussian_kernel(0.3, 4)).C_k_rkhs == 1.0
    for bad in ((0.0, 10, 0.5), (1.0, 0, 0.5), (1.0, 10, 0.0), (1.0, 10, 1.5)):
        with pytest.raises(ArgumentError):
            hoeffding_bound(*bad)


def test_coverage_small_run():
    out = coverage_experiment(GAUSS, TARGET, 64, 0.1, 100, seed=3)
    assert out["C_k"] == 1.0
    assert out["exceed_fraction"] <= 0.1 + 0.04
    with pytest.raises(PreconditionError):
        coverage_experiment(imq_kernel(1.0, 0.4, 1), TARGET, 16, 0.1, 5, norm="l2")


def test_config_validation():
    for grid in ((), (1, 4), (8, 4), (4, 4)):
        with pytest.raises(ArgumentError):
            RateExperimentConfig(GAUSS, TARGET, grid, 3)
    with pytest.raises(ArgumentError):
        RateExperimentConfig(GAUSS, TARGET, (4, 8), 0)
    with pytest.raises(ArgumentError):
        RateExperimentConfig(GAUSS, IsotropicGaussian(np.zeros(2), 1.0), (4, 8), 2)
    with pytest.raises(PreconditionError):
        RateExperimentConfig(imq_kernel(1.0, 0.4, 1), TARGET, (4, 8), 2, norm="l2")


def test_rate_report_is_identical_across_workers():
    cfg = RateExperimentConfig(GAUSS, TARGET, (8, 16, 32), 12, seed=21)
    a = run_rate_experiment(cfg, jobs=1)
    b = run_rate_experiment(cfg, jobs=2)
    assert a.to_dict() == b.to_dict()
    assert a.to_csv() == b.to_csv()
    lo, hi = a.slope_ci
    assert lo <= a.slope <= hi
    assert all(np.all(a.errors[n] >= 0) for n in cfg.n_grid)


def test_single_n_has_no_slope():
    rep = run_rate_experiment(RateExperimentConfig(GAUSS, TARGET, (16,), 5))
    assert rep.slope is None and rep.slope_ci is None
    assert rep.to_dict()["slope"] is None


def test_csv_layout():
    rep = run_rate_experiment(RateExperimentConfig(GAUSS, TARGET, (4, 8), 2, seed=1))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "n,replicate,error" and len(lines) == 5
    assert float(lines[1].split(",")[2]) == rep.errors[4][0]


class _Opaque:
    d = 1


def test_replicate_failure_carries_coordinates():
    with pytest.raises(ReplicateError) as info:
        run_rate_experiment(RateExperimentConfig(GAUSS, _Opaque(), (4, 8), 2))
    assert info.value.n == 4 and info.value.replicate == 0


def test_two_point_target_has_positive_error():
    t = TwoPointDiscrete([0.0], [3.0], 0.5)
    rep = run_rate_experiment(RateExperimentConfig(GAUSS, t, (16, 64), 20, seed=2))
    assert rep.mean_error[16] > rep.mean_error[64] > 0


def test_loglog_fit_recovers_power():
    ns = np.array([10, 100, 1000])
    assert fit_loglog(ns, 3.0 * ns ** -0.5)[0] == pytest.approx(-0.5, rel=1e-12)


def test_bootstrap_interval_contains_estimate():
    errors = {n: np.full(5, n ** -0.5) for n in (10, 20, 40)}
    lo, hi = bootstrap_slope_ci((10, 20, 40), errors, -0.5, 0, resamples=50)
    assert lo == pytest.approx(-0.5) and hi == pytest.approx(-0.5)


def test_resolve_jobs(monkeypatch):
    monkeypatch.setenv("KME_LAB_JOBS", "3")
    assert resolve_jobs() == 3
    assert resolve_jobs(2) == 2
    with pytest.raises(ArgumentError):
        resolve_jobs(0)
    monkeypatch.setenv("KME_LAB_JOBS", "many")
    with pytest.raises(ArgumentError):
        resolve_jobs()

"""Empirical kernel mean embeddings: sampling, errors and rate experiments."""

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ReplicateError
from .geometry import (
    IsotropicGaussian,
    TwoPointDiscrete,
    WeightedPointMeasure,
    l2_empirical_vs_gauss,
    l2_weighted,
    mmd_empirical_vs_gauss,
    mmd_weighted,
)
from .kernels import RadialKernel, kernel_constants, require_moment_condition

NORMS = ("rkhs", "l2")
BOOTSTRAP_RESAMPLES = 1000
CI_LEVEL = 0.95


def make_rng(*key):
    """Counter-based generator keyed by non-negative integers."""
    if any(int(k) < 0 for k in key):
        raise ArgumentError("RNG keys must be non-negative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def resolve_jobs(jobs=None):
    if jobs is None:
        jobs = os.environ.get("KME_LAB_JOBS", "1")
    try:
        jobs = int(jobs)
    except (TypeError, ValueError):
        raise ArgumentError(f"jobs must be an integer, got {jobs!r}") from None
    if jobs < 1:
        raise ArgumentError(f"jobs must be >= 1, got {jobs}")
    return jobs


def _draw(target, n, rng):
    if isinstance(target, IsotropicGaussian):
        pts = target.mu + math.sqrt(target.sigma2) * rng.standard_normal((n, target.d))
    elif isinstance(target, TwoPointDiscrete):
        pick = rng.random(n) < target.p
        pts = np.where(pick[:, None], target.x[None, :], target.v[None, :])
    else:
        raise ArgumentError(f"unsupported target type {type(target).__name__}")
    return WeightedPointMeasure.uniform(pts)


def sample_target(target, n, seed):
    """``n`` i.i.d. draws from ``target`` with weights ``1/n``.

    ``seed`` is an integer or a tuple of integers used as the RNG key.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ArgumentError(f"n must be a positive integer, got {n!r}")
    key = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    return _draw(target, int(n), make_rng(*key))


def _check_norm(norm):
    if norm not in NORMS:
        raise ArgumentError(f"norm must be one of {NORMS}, got {norm!r}")


def empirical_error(kernel, sample, target, norm="rkhs"):
    """Distance between the embedding of ``sample`` and that of ``target``."""
    _check_norm(norm)
    if isinstance(target, IsotropicGaussian):
        fn = mmd_empirical_vs_gauss if norm == "rkhs" else l2_empirical_vs_gauss
        return math.sqrt(fn(kernel, sample, target))
    if isinstance(target, TwoPointDiscrete):
        target = target.as_weighted()
    if isinstance(target, WeightedPointMeasure):
        fn = mmd_weighted if norm == "rkhs" else l2_weighted
        return math.sqrt(fn(kernel, sample, target))
    raise ArgumentError(f"unsupported target type {type(target).__name__}")


def hoeffding_bound(Ck, n, delta):
    """High-probability bound on the empirical embedding error."""
    Ck = float(Ck)
    delta = float(delta)
    if not (np.isfinite(Ck) and Ck > 0):
        raise ArgumentError(f"Ck must be positive and finite, got {Ck!r}")
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ArgumentError(f"n must be a positive integer, got {n!r}")
    if not 0.0 < delta <= 1.0:
        raise ArgumentError(f"delta must lie in (0, 1], got {delta!r}")
    return math.sqrt(Ck / n) + math.sqrt(2.0 * Ck * math.log(1.0 / delta) / n)


# -- experiments ----------------------------------------------------------

@dataclass(frozen=True)
class RateExperimentConfig:
    kernel: RadialKernel
    target: object
    n_grid: tuple
    replicates: int
    norm: str = "rkhs"
    seed: int = 0

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if not grid:
            raise ArgumentError("n_grid must not be empty")
        if any(n < 2 for n in grid):
            raise ArgumentError("all sample sizes must be >= 2")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ArgumentError("n_grid must be strictly increasing")
        if isinstance(self.replicates, bool) or int(self.replicates) < 1:
            raise ArgumentError("replicates must be >= 1")
        _check_norm(self.norm)
        if int(self.seed) < 0 or int(self.seed) >= 2 ** 64:
            raise ArgumentError("seed must be a 64-bit unsigned integer")
        if self.target.d != self.kernel.d:
            raise ArgumentError("target dimension does not match the kernel")
        if self.norm == "l2":
            require_moment_condition(self.kernel)
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "replicates", int(self.replicates))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class RateReport:
    n_grid: tuple
    errors: dict
    mean_error: dict
    median_error: dict
    slope: float = None
    intercept: float = None
    slope_ci: tuple = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "n_grid": list(self.n_grid),
            "errors": {str(n): [float(e) for e in self.errors[n]] for n in self.n_grid},
            "mean_error": {str(n): float(self.mean_error[n]) for n in self.n_grid},
            "median_error": {str(n): float(self.median_error[n]) for n in self.n_grid},
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_ci": None if self.slope_ci is None else list(self.slope_ci),
            "meta": dict(self.meta),
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "replicate", "error"])
        for n in self.n_grid:
            for r, e in enumerate(self.errors[n]):
                w.writerow([n, r, repr(float(e))])
        return buf.getvalue()


def _replicate(task):
    kernel, target, norm, seed, n, rep = task
    try:
        sample = _draw(target, n, make_rng(seed, n, rep))
        return empirical_error(kernel, sample, target, norm)
    except Exception as exc:
        raise ReplicateError(n, rep, exc) from exc


def run_tasks(fn, tasks, jobs=None):
    """Map ``fn`` over ``tasks``; results come back in task order for any worker count."""
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=chunk))


def fit_loglog(ns, values):
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def bootstrap_slope_ci(ns, errors, slope, seed, resamples=BOOTSTRAP_RESAMPLES, level=CI_LEVEL):
    """Basic bootstrap interval for the log-log slope, resampling replicates within each ``n``.

    The interval is widened to include ``slope`` if needed.
    """
    rng = make_rng(seed, 0, 0)
    boot = np.empty(resamples)
    mats = [np.asarray(errors[n]) for n in ns]
    for b in range(resamples):
        means = [m[rng.integers(0, m.size, m.size)].mean() for m in mats]
        boot[b] = fit_loglog(ns, means)[0]
    q_lo, q_hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2])
    lo, hi = 2 * slope - q_hi, 2 * slope - q_lo
    return float(min(lo, slope)), float(max(hi, slope))


def run_rate_experiment(config, jobs=None):
    tasks = [(config.kernel, config.target, config.norm, config.seed, n, r)
             for n in config.n_grid for r in range(config.replicates)]
    flat = run_tasks(_replicate, tasks, jobs)
    errors = {}
    k = 0
    for n in config.n_grid:
        errors[n] = np.array(flat[k:k + config.replicates])
        k += config.replicates
    mean = {n: float(errors[n].mean()) for n in config.n_grid}
    median = {n: float(np.median(errors[n])) for n in config.n_grid}
    slope = intercept = ci = None
    ns = config.n_grid
    if len(ns) >= 2 and all(mean[n] > 0 for n in ns):
        slope, intercept = fit_loglog(ns, [mean[n] for n in ns])
        ci = bootstrap_slope_ci(ns, errors, slope, config.seed)
    meta = {"kernel": config.kernel.label, "d": config.kernel.d, "norm": config.norm, "seed": config.seed,
            "replicates": config.replicates}
    return RateReport(ns, errors, mean, median, slope, intercept, ci, meta)


def coverage_experiment(kernel, target, n, delta, replicates, seed=0, norm="rkhs", jobs=None):
    """Fraction of replicates whose error exceeds the concentration bound."""
    _check_norm(norm)
    if replicates < 1:
        raise ArgumentError("replicates must be >= 1")
    if norm == "l2":
        require_moment_condition(kernel)
    consts = kernel_constants(kernel)
    ck = consts.C_k_rkhs if norm == "rkhs" else consts.C_k_l2
    bound = hoeffding_bound(ck, n, delta)
    errs = np.array(run_tasks(_replicate, [(kernel, target, norm, seed, n, r) for r in range(replicates)], jobs))
    return {"n": n, "delta": delta, "C_k": ck, "bound": bound, "replicates": replicates,
            "exceed_fraction": float(np.mean(errs > bound)), "max_error": float(errs.max())}

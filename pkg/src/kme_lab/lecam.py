"""Two-point and multi-hypothesis testing floors, packings and hard instance families."""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import bounds
from .errors import ArgumentError, ConstructionError
from .estimator import empirical_error, make_rng, run_tasks, _draw
from .geometry import IsotropicGaussian, l2_pair, rkhs_pair
from .kernels import kernel_from_spec, kernel_to_spec, nu_integrate

KL_ALPHA = 0.125
MAX_HYPOTHESES = 125
PACK_DIM_CAP = 3
SEP_RTOL = 1e-12


def lecam_two(alpha):
    """Testing floor for two hypotheses whose KL divergence is at most ``alpha``."""
    alpha = float(alpha)
    if not (alpha > 0 and np.isfinite(alpha)):
        raise ArgumentError(f"alpha must be positive and finite, got {alpha!r}")
    return max(0.25 * math.exp(-alpha), (1.0 - math.sqrt(alpha / 2.0)) / 2.0)


def lecam_many(M, alpha):
    """Testing floor for ``M + 1`` hypotheses with mean KL at most ``alpha log M``."""
    alpha = float(alpha)
    if isinstance(M, bool) or int(M) != M or M < 2:
        raise ArgumentError(f"M must be an integer >= 2, got {M!r}")
    if not 0 < alpha <= KL_ALPHA:
        raise ArgumentError(f"alpha must lie in (0, 1/8], got {alpha!r}")
    rm = math.sqrt(M)
    return rm / (1.0 + rm) * (1.0 - 2.0 * alpha - math.sqrt(2.0 * alpha / math.log(M)))


def kl_gauss_iso(mu0, mu1, sigma2, n=1):
    """KL divergence between ``n``-fold products of ``N(mu0, sigma2 I)`` and ``N(mu1, sigma2 I)``."""
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    if mu0.shape != mu1.shape:
        raise ArgumentError("dimension mismatch between means")
    if not sigma2 > 0:
        raise ArgumentError("sigma2 must be positive")
    if n < 1:
        raise ArgumentError("n must be >= 1")
    diff = mu0 - mu1
    return n * float(diff @ diff) / (2.0 * sigma2)


def kl_two_point_bound(p0, p1, n=1):
    """``(bound, exact)`` for the KL between ``n``-fold Bernoulli products."""
    for p in (p0, p1):
        if not 0.0 < p < 1.0:
            raise ArgumentError(f"probabilities must lie strictly between 0 and 1, got {p!r}")
    bound = n * (p0 - p1) ** 2 / (p1 * (1.0 - p1))
    exact = n * (p0 * math.log(p0 / p1) + (1.0 - p0) * math.log((1.0 - p0) / (1.0 - p1)))
    return bound, max(exact, 0.0)


# -- packings -------------------------------------------------------------

def _certify(points, radius, sep):
    if points.shape[0] >= 2:
        dist, _ = cKDTree(points).query(points, k=2)
        min_sep = float(dist[:, 1].min())
    else:
        min_sep = math.inf
    norms = np.linalg.norm(points, axis=1)
    return min_sep >= sep * (1.0 - SEP_RTOL) and bool(np.all(norms <= radius)), min_sep


def pack_ball(d, radius, N, max_candidates=2_000_000):
    """At least ``N**d`` points in the closed ball of ``radius`` with pairwise distance ``>= radius/N``.

    Candidates come from a cube grid scaled into the ball, origin first, and are
    thinned greedily; the result is re-certified before it is returned.
    """
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise ArgumentError(f"d must be a positive integer, got {d!r}")
    if isinstance(N, bool) or int(N) != N or N < 3:
        raise ArgumentError(f"N must be an integer >= 3, got {N!r}")
    if not radius > 0:
        raise ArgumentError("radius must be positive")
    d, N = int(d), int(N)
    need = N ** d
    sep = radius / N
    half = radius / math.sqrt(d) * (1.0 - 4e-16 * d)
    per_axis = N
    step = 2.0 * half / (N - 1)
    if step < sep:
        per_axis = int(math.floor(2.0 * radius / sep)) + 1
    if per_axis ** d > max_candidates:
        raise ConstructionError(f"packing grid for d={d}, N={N} is too large to enumerate", achieved=0)
    if per_axis == N:
        axis = np.linspace(-half, half, N)
    else:
        k = np.arange(-(per_axis // 2), per_axis // 2 + 1)
        axis = k * sep
    cand = np.array(list(itertools.product(axis, repeat=d)), dtype=float)
    cand = cand[np.linalg.norm(cand, axis=1) <= radius]
    cand = cand[np.argsort(np.linalg.norm(cand, axis=1), kind="stable")]
    tree = cKDTree(cand)
    taken = np.zeros(len(cand), dtype=bool)
    blocked = np.zeros(len(cand), dtype=bool)
    for i in range(len(cand)):
        if blocked[i]:
            continue
        taken[i] = True
        for j in tree.query_ball_point(cand[i], sep * (1.0 - SEP_RTOL)):
            blocked[j] = True
    pts = cand[taken]
    ok, min_sep = _certify(pts, radius, sep)
    if pts.shape[0] < need or not ok:
        raise ConstructionError(f"packing produced {pts.shape[0]} of {need} required points "
                                f"(min separation {min_sep:.6g}, required {sep:.6g})", achieved=pts.shape[0])
    return pts


# -- hard families --------------------------------------------------------

@dataclass
class HardFamily:
    hypotheses: list
    norm: str
    kernel_spec: dict
    s: float
    alpha: float
    M: int
    meta: dict = field(default_factory=dict)

    @property
    def kernel(self):
        return kernel_from_spec(self.kernel_spec)

    @property
    def means(self):
        return np.stack([g.mu for g in self.hypotheses])

    def to_dict(self):
        out = {"norm": self.norm, "kernel": self.kernel_spec, "s": self.s, "alpha": self.alpha, "M": self.M,
               "meta": bounds._jsonable(self.meta)}
        if self.hypotheses and isinstance(self.hypotheses[0], IsotropicGaussian):
            out["hypotheses"] = [{"mu": g.mu.tolist(), "sigma2": g.sigma2} for g in self.hypotheses]
        else:
            out["hypotheses"] = [{"x": h.x.tolist(), "v": h.v.tolist(), "p": h.p} for h in self.hypotheses]
        return out


def build_hard_family_thm8(kernel, d, n, norm="rkhs"):
    """Gaussian hypotheses on a packing of the ball of radius ``sqrt(c_nu/n)``.

    In ``d > 3`` the three-dimensional packing is embedded in the first three
    coordinates, giving 125 hypotheses.
    """
    if int(d) != kernel.d:
        raise ArgumentError(f"d={d} does not match the kernel dimension {kernel.d}")
    cons = bounds.thm8_construction(kernel, n, norm)
    radius = cons["radius"]
    pd = min(kernel.d, PACK_DIM_CAP)
    pts = pack_ball(pd, radius, bounds.N_PACK)[:MAX_HYPOTHESES]
    if pd < kernel.d:
        pts = np.hstack([pts, np.zeros((pts.shape[0], kernel.d - pd))])
    sigma2 = cons["sigma2"]
    hyps = [IsotropicGaussian(p, sigma2) for p in pts]
    if norm == "rkhs":
        theorem = bounds.bound_thm8(kernel, kernel.d, n)
    else:
        theorem = bounds.bound_thm13(kernel, kernel.d, n)
    meta = dict(cons)
    meta.update({"theorem_s": theorem.s, "floor": theorem.floor, "pack_dim": pd, "hypotheses": len(hyps)})
    return HardFamily(hyps, norm, kernel_to_spec(kernel), cons["s_proof"], KL_ALPHA, len(hyps) - 1, meta)


@dataclass(frozen=True)
class ConditionReport:
    min_distance: float
    required_distance: float
    mean_kl: float
    max_pairwise_kl: float
    kl_budget: float
    flags: dict
    details: dict = field(default_factory=dict)

    @property
    def all_pass(self):
        return all(self.flags.values())

    def to_dict(self):
        return {"min_distance": self.min_distance, "required_distance": self.required_distance,
                "mean_kl": self.mean_kl, "max_pairwise_kl": self.max_pairwise_kl, "kl_budget": self.kl_budget,
                "flags": {k: bool(v) for k, v in self.flags.items()}, "all_pass": self.all_pass,
                "details": bounds._jsonable(self.details)}


def _tau_mean(kernel, sigma2):
    """Mean of ``t`` under the measure proportional to ``t (4 sigma2 t + 1)^(-(d+2)/2) dnu``."""
    h = 1.0 + kernel.d / 2.0

    def f(t):
        q = 4.0 * sigma2 * t + 1.0
        with np.errstate(over="ignore"):
            base = t / q ** h
        return np.stack([base, t * base], axis=-1)
    res = nu_integrate(kernel.nu, f)
    z, m = res.value
    return float(m / z)


def _e1_flags(kernel, family, delta2):
    d = kernel.d
    s2 = family.hypotheses[0].sigma2
    t0, t1, beta, _ = bounds.bk_for(kernel)
    out = {}
    if d > 2:
        mu_tau = _tau_mean(kernel, s2)
        lhs53 = 2.0 * mu_tau * delta2 / (4.0 * s2 * mu_tau + 1.0)
        rhs55 = (2.0 / 3.0) * t1 * s2 + beta * t0 * math.e / (24.0 * t1 * kernel.nu.total_mass) \
            * (d - 2) ** 2 / (d * (d + 2))
        out["alt_local_condition"] = bool(np.all(lhs53 <= 1.0 / 3.0))
        out["alt_sufficient_condition"] = bool(np.all(t1 * delta2 <= rhs55))
    else:
        out["alt_local_condition"] = bool(np.all(delta2 <= s2))
    return out


def verify_hard_family(family, check_alternate=False):
    """Check the separation, KL budget and local-curvature premises on a constructed family."""
    kernel = family.kernel
    mus = family.means
    s2 = family.hypotheses[0].sigma2
    if any(not math.isclose(g.sigma2, s2, rel_tol=0, abs_tol=0) for g in family.hypotheses):
        raise ArgumentError("all hypotheses must share sigma2")
    n = family.meta["n"]
    iu = np.triu_indices(len(mus), k=1)
    delta2 = np.sum((mus[iu[0]] - mus[iu[1]]) ** 2, axis=1)
    pair = rkhs_pair if family.norm == "rkhs" else l2_pair
    uniq, inv = np.unique(delta2, return_inverse=True)
    dist2 = 2.0 * np.asarray(pair(kernel, uniq, 2.0 * s2, gap=True))[inv]
    min_dist = float(math.sqrt(dist2.min()))
    kl_to_first = np.array([kl_gauss_iso(mu, mus[0], s2, n) for mu in mus[1:]])
    mean_kl = float(kl_to_first.mean())
    max_kl = float(n * delta2.max() / (2.0 * s2))
    budget = family.alpha * math.log(family.M)
    slope = family.meta["dist2_slope"]
    t1 = family.meta["t1"]
    if family.norm == "rkhs":
        local = t1 * delta2 <= 1.0 + 4.0 * t1 * s2
    else:
        local = t1 * delta2 <= 4.0 * t1 * s2 + 2.0
    flags = {
        "separation": min_dist >= 2.0 * family.s * (1.0 - SEP_RTOL),
        "kl_budget": mean_kl <= budget,
        "local_condition": bool(np.all(local)),
        "distance_lower_bound": bool(np.all(dist2 >= slope * delta2 * (1.0 - 1e-10))),
        "inside_ball": bool(np.all(np.linalg.norm(mus, axis=1) <= family.meta["radius"])),
    }
    if check_alternate and family.norm == "rkhs":
        flags.update(_e1_flags(kernel, family, delta2))
    details = {"floor": lecam_many(family.M, family.alpha), "pairs": int(delta2.size),
               "min_mean_gap": float(math.sqrt(delta2.min())),
               "alt_sample_size_met": n >= bounds.thmE1_sample_size(kernel)}
    return ConditionReport(min_dist, 2.0 * family.s, mean_kl, max_kl, budget, flags, details)


# -- stress test ----------------------------------------------------------

def _zero_error(kernel, g, norm):
    if norm == "rkhs":
        return math.sqrt(rkhs_pair(kernel, 0.0, 2.0 * g.sigma2))
    return math.sqrt(l2_pair(kernel, 0.0, 2.0 * g.sigma2))


def _stress_task(task):
    kernel, norm, g, n, seed, j, r, estimator = task
    sample = _draw(g, n, make_rng(seed, j, r))
    if estimator == "empirical":
        return empirical_error(kernel, sample, g, norm)
    est = estimator(sample)
    return empirical_error(kernel, est, g, norm)


def minimax_stress(estimator, family, replicates, seed=0, jobs=None, threshold=None):
    """Worst-case frequency over hypotheses of ``error >= threshold`` (default ``family.s``).

    ``estimator`` is ``"empirical"``, ``"zero"`` or a picklable callable mapping a
    sample to a ``WeightedPointMeasure`` whose embedding is the estimate.
    """
    if isinstance(replicates, bool) or int(replicates) < 1:
        raise ArgumentError("replicates must be >= 1; an empty run has no summary")
    if not (estimator in ("empirical", "zero") or callable(estimator)):
        raise ArgumentError(f"unknown estimator {estimator!r}")
    kernel = family.kernel
    thr = family.s if threshold is None else float(threshold)
    n = family.meta["n"]
    freq = []
    for j, g in enumerate(family.hypotheses):
        if estimator == "zero":
            errs = np.full(replicates, _zero_error(kernel, g, family.norm))
        else:
            tasks = [(kernel, family.norm, g, n, seed, j, r, estimator) for r in range(replicates)]
            errs = np.asarray(run_tasks(_stress_task, tasks, jobs))
        freq.append(float(np.mean(errs >= thr)))
    worst = int(np.argmax(freq))
    return {"estimator": estimator if isinstance(estimator, str) else getattr(estimator, "__name__", "callable"),
            "threshold": thr, "replicates": int(replicates), "frequencies": freq,
            "worst_frequency": freq[worst], "worst_hypothesis": worst,
            "floor": family.meta.get("floor")}

"""Minimax lower-bound thresholds and the per-kernel constants they use.

Every ``bound_*`` function returns a :class:`BoundReport` holding the
separation threshold ``s`` (an error level that no estimator can beat
uniformly with probability above ``floor``), the checked preconditions and
the constants used.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gammaincinv, gammaln

from .errors import ArgumentError, ConstructionError, InternalConsistencyError, PreconditionError
from .kernels import (
    MOMENT_CONDITION,
    RadialKernel,
    eval_psi,
    moment_condition,
    nu_integrate,
    nu_integrate2,
    nu_interval_mass,
    psi_l2_gap,
    require_moment_condition,
    upper_tail_point,
)

N_PACK = 5
MASS_RTOL = 1e-12


@dataclass(frozen=True)
class Precondition:
    name: str
    satisfied: bool
    detail: str = ""


@dataclass(frozen=True)
class BoundReport:
    theorem: str
    s: float
    floor: float
    preconditions: tuple
    inputs: dict = field(default_factory=dict)

    @property
    def applicable(self):
        return all(p.satisfied for p in self.preconditions)

    def scaled_s(self):
        """``s * sqrt(n)``, constant in ``n`` for every theorem here."""
        return self.s * math.sqrt(self.inputs["n"])

    def to_dict(self):
        return {
            "theorem": self.theorem,
            "s": self.s,
            "floor": self.floor,
            "applicable": self.applicable,
            "preconditions": [
                {"name": p.name, "satisfied": bool(p.satisfied), "detail": p.detail} for p in self.preconditions
            ],
            "inputs": _jsonable(self.inputs),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


class DConstants(NamedTuple):
    lo: float
    hi: float
    beta: float
    value: float


def _check_n(n):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ArgumentError(f"n must be a positive integer, got {n!r}")
    return int(n)


def _check_d(kernel, d):
    if d is None:
        return kernel.d
    if int(d) != kernel.d:
        raise ArgumentError(f"d={d} does not match the kernel dimension {kernel.d}")
    return kernel.d


def _shrink(d):
    return 1.0 - 2.0 / (2.0 + d)


def _mass_check(kernel, lo, hi, beta):
    mass = nu_interval_mass(kernel, lo, hi)
    ok = mass >= beta * (1.0 - MASS_RTOL)
    return Precondition("interval mass >= beta", ok, f"nu([{lo:.6g}, {hi:.6g}]) = {mass:.12g}, beta = {beta:.12g}")


# -- per-family closed-form constants ------------------------------------

def _mixture_extremes(kernel):
    etas = kernel.params["etas"]
    return max(etas), min(etas), float(sum(kernel.params["betas"]))


def alpha_for(kernel):
    """``(t1, alpha)`` with ``nu([t1, inf)) >= alpha``."""
    label = kernel.label
    if label == "gaussian":
        t1, alpha = 1.0 / (2.0 * kernel.params["eta"] ** 2), 1.0
    elif label == "gaussian_mixture":
        eta_max, _, cm = _mixture_extremes(kernel)
        t1, alpha = 1.0 / (2.0 * eta_max ** 2), cm
    elif label == "inverse_multiquadric":
        c, g = kernel.params["c"], kernel.params["gamma"]
        t1, alpha = float(gammaincinv(g, 0.5)) / (c * c), c ** (-2.0 * g) / 2.0
    elif label == "matern":
        c, tau = kernel.params["c"], kernel.params["tau"]
        a = tau - kernel.d / 2.0
        t1, alpha = (c * c / 4.0) / float(gammaincinv(a, 0.5)), 0.5
    else:
        alpha = kernel.nu.total_mass / 2.0
        t1 = upper_tail_point(kernel, alpha)
        if t1 <= 0:
            raise PreconditionError("nu must have half its mass on (0, inf)")
    mass = nu_interval_mass(kernel, t1, np.inf)
    if mass < alpha * (1.0 - MASS_RTOL):
        raise InternalConsistencyError(f"tail mass {mass} below alpha {alpha}")
    return float(t1), float(alpha)


def find_z_beta(kernel):
    """``(|z|^2, beta)`` with ``psi(0) - psi(z) >= beta``.

    Radial kernels use ``|z|^2 = 1/t1`` and ``beta = alpha/2``.  A callable
    ``psi(r2)`` is handled by a log-grid scan refined with golden-section
    search on ``psi(0) - psi(r2)``.
    """
    if isinstance(kernel, RadialKernel):
        t1, alpha = alpha_for(kernel)
        return 1.0 / t1, alpha / 2.0
    if not callable(kernel):
        raise ArgumentError("find_z_beta needs a RadialKernel or a callable psi(r2)")
    from scipy.optimize import minimize_scalar

    psi = kernel
    p0 = float(psi(0.0))
    grid = np.linspace(-12.0, 12.0, 241)
    gaps = np.array([p0 - float(psi(math.exp(u))) for u in grid])
    k = int(np.argmax(gaps))
    if not gaps[k] > 0:
        raise PreconditionError("psi must not be constant", "no z with psi(0) > psi(z) found")
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(lambda u: -(p0 - float(psi(math.exp(u)))), bracket=(lo, grid[k], hi)
                          if lo < grid[k] < hi else None, method="golden")
    u = float(res.x) if -res.fun >= gaps[k] else float(grid[k])
    return math.exp(u), p0 - float(psi(math.exp(u)))


def _gamma_branch(shape, weight):
    """Lower bound on the mass of ``[shape/(2 rate), shape/rate]`` for ``weight * Gamma(shape, rate)``."""
    if shape >= 1.0:
        return weight * math.exp(-gammaln(shape) + shape * math.log(shape / (2.0 * math.e)))
    return weight / 2.0 * math.exp(-gammaln(shape) + shape * math.log(shape / math.e))


def _interval_choice(kernel):
    """``(lo, hi, beta)`` shared by the three interval constants."""
    label = kernel.label
    if label == "gaussian":
        t = 1.0 / (2.0 * kernel.params["eta"] ** 2)
        return t, t, 1.0
    if label == "gaussian_mixture":
        eta_max, eta_min, cm = _mixture_extremes(kernel)
        return 1.0 / (2.0 * eta_max ** 2), 1.0 / (2.0 * eta_min ** 2), cm
    if label == "inverse_multiquadric":
        c, g = kernel.params["c"], kernel.params["gamma"]
        return g / (2.0 * c * c), g / (c * c), _gamma_branch(g, c ** (-2.0 * g))
    if label == "matern":
        c, tau = kernel.params["c"], kernel.params["tau"]
        gt = tau - kernel.d / 2.0
        ct2 = c * c / 4.0
        return ct2 / gt, 2.0 * ct2 / gt, _gamma_branch(gt, 1.0)
    z = kernel.nu.total_mass
    hi = upper_tail_point(kernel, z / 4.0)
    lo = upper_tail_point(kernel, 3.0 * z / 4.0)
    if lo <= 0:
        raise PreconditionError("nu must have three quarters of its mass on (0, inf)")
    return lo, hi, nu_interval_mass(kernel, lo, hi)


def bk_for(kernel):
    """``(t0, t1, beta, B_k)`` with ``B_k = beta t0 / t1``."""
    t0, t1, beta = _interval_choice(kernel)
    label = kernel.label
    if label == "gaussian":
        value = 1.0
    elif label == "gaussian_mixture":
        eta_max, eta_min, cm = _mixture_extremes(kernel)
        value = cm * eta_min ** 2 / eta_max ** 2
    elif label == "inverse_multiquadric":
        c, g = kernel.params["c"], kernel.params["gamma"]
        if g >= 1.0:
            value = c ** (-2.0 * g) / (2.0 * math.gamma(g)) * (g / (2.0 * math.e)) ** g
        else:
            value = c ** (-2.0 * g) / (4.0 * math.gamma(g)) * (g / math.e) ** g
    elif label == "matern":
        gt = kernel.params["tau"] - kernel.d / 2.0
        if gt >= 1.0:
            value = 1.0 / (2.0 * math.gamma(gt)) * ((2.0 * gt) / (4.0 * math.e)) ** gt
        else:
            value = 1.0 / (4.0 * math.gamma(gt)) * ((2.0 * gt) / (2.0 * math.e)) ** gt
    else:
        value = beta * t0 / t1
    return DConstants(t0, t1, beta, float(value))


def ak_for(kernel):
    """``(delta0, delta1, beta, A_k)`` with ``A_k = beta^2 delta1^(-d/2)`` (tabulated closed forms)."""
    d0, d1, beta = _interval_choice(kernel)
    d = kernel.d
    label = kernel.label
    if label == "gaussian":
        value = (2.0 * kernel.params["eta"] ** 2) ** (d / 2.0)
    elif label == "gaussian_mixture":
        _, eta_min, cm = _mixture_extremes(kernel)
        value = cm ** 2 * (2.0 * eta_min ** 2) ** (d / 2.0)
    elif label == "inverse_multiquadric":
        c, g = kernel.params["c"], kernel.params["gamma"]
        core = c ** (d - 4.0 * g) / math.gamma(g) ** 2 * g ** (2.0 * g - d / 2.0)
        value = core / (2.0 * math.e) ** (2.0 * g) if g >= 1.0 else core / (4.0 * math.e ** (2.0 * g))
    elif label == "matern":
        c = kernel.params["c"]
        gt = kernel.params["tau"] - d / 2.0
        core = c ** (-d) * math.exp(-2.0 * gt) / math.gamma(gt) ** 2
        if gt >= 1.0:
            value = core * (gt / 2.0) ** (2.0 * gt + d / 2.0)
        else:
            value = core * gt ** (2.0 * gt + d / 2.0) / 2.0 ** (2.0 + d / 2.0)
    else:
        value = beta ** 2 * d1 ** (-d / 2.0)
    return DConstants(d0, d1, beta, float(value))


def bk_l2_for(kernel):
    """``(delta0, delta1, beta, B_k)`` with ``B_k = beta^2 delta0 delta1^(-(d+2)/2)`` (tabulated closed forms)."""
    d0, d1, beta = _interval_choice(kernel)
    d = kernel.d
    label = kernel.label
    if label == "gaussian":
        value = (2.0 * kernel.params["eta"] ** 2) ** (d / 2.0)
    elif label == "gaussian_mixture":
        eta_max, eta_min, cm = _mixture_extremes(kernel)
        value = cm ** 2 * 2.0 ** (d / 2.0) * eta_min ** (d + 2) / eta_max ** 2
    elif label == "inverse_multiquadric":
        c, g = kernel.params["c"], kernel.params["gamma"]
        core = c ** (d - 4.0 * g) / math.gamma(g) ** 2 * g ** (2.0 * g - d / 2.0)
        value = core / (2.0 * (2.0 * math.e) ** (2.0 * g)) if g >= 1.0 else core / (8.0 * math.e ** (2.0 * g))
    elif label == "matern":
        c = kernel.params["c"]
        gt = kernel.params["tau"] - d / 2.0
        core = c ** (-d) * math.exp(-2.0 * gt) / math.gamma(gt) ** 2
        if gt >= 1.0:
            value = core / 2.0 * (gt / 2.0) ** (2.0 * gt + d / 2.0)
        else:
            value = core * gt ** (2.0 * gt + d / 2.0) / 2.0 ** (3.0 + d / 2.0)
    else:
        value = beta ** 2 * d0 * d1 ** (-(d + 2) / 2.0)
    return DConstants(d0, d1, beta, float(value))


def constants_table(kernel):
    """All per-kernel constants with definition cross-checks."""
    d = kernel.d
    t1a, alpha = alpha_for(kernel)
    bk = bk_for(kernel)
    ak = ak_for(kernel)
    bl = bk_l2_for(kernel)
    rows = []

    def row(name, lo, hi, beta, value, definition):
        mass = nu_interval_mass(kernel, lo, hi)
        rows.append({
            "constant": name,
            "lo": lo,
            "hi": hi,
            "beta": beta,
            "value": value,
            "from_definition": definition,
            "matches_definition": bool(math.isclose(value, definition, rel_tol=1e-10)),
            "interval_mass": mass,
            "mass_check": bool(mass >= beta * (1.0 - MASS_RTOL)),
        })

    row("alpha", t1a, math.inf, alpha, alpha, alpha)
    row("B_k", bk.lo, bk.hi, bk.beta, bk.value, bk.beta * bk.lo / bk.hi)
    row("A_k", ak.lo, ak.hi, ak.beta, ak.value, ak.beta ** 2 * ak.hi ** (-d / 2.0))
    row("B_k_l2", bl.lo, bl.hi, bl.beta, bl.value, bl.beta ** 2 * bl.lo * bl.hi ** (-(d + 2) / 2.0))
    return rows


# -- discrete-measure bounds ----------------------------------------------

def _positive_arg(name, value):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ArgumentError(f"{name} must be positive, got {value!r}")
    return value


def bound_thm1(beta, n):
    beta = _positive_arg("beta", beta)
    n = _check_n(n)
    s = math.sqrt(2.0 * beta / n) / 6.0
    pre = (Precondition("psi(0) - psi(z) >= beta > 0", True, f"beta = {beta:.12g}"),)
    return BoundReport("thm1", s, 0.25, pre, {"beta": beta, "n": n})


def bound_cor2(alpha, n):
    alpha = _positive_arg("alpha", alpha)
    n = _check_n(n)
    s = math.sqrt(alpha / n) / 6.0
    pre = (Precondition("nu([t1, inf)) >= alpha > 0", True, f"alpha = {alpha:.12g}"),)
    return BoundReport("cor2", s, 0.25, pre, {"alpha": alpha, "n": n})


def bound_thm9(kernel, z_norm2, n):
    n = _check_n(n)
    require_moment_condition(kernel)
    z2 = _positive_arg("z_norm2", z_norm2)
    c = 2.0 * float(psi_l2_gap(kernel, z2))
    if not c > 0:
        raise InternalConsistencyError(f"C_z = {c!r} must be positive for a characteristic kernel")
    s = math.sqrt(c / n) / 6.0
    pre = (Precondition(MOMENT_CONDITION, True), Precondition("C_z > 0", True, f"C_z = {c:.12g}"))
    return BoundReport("thm9", s, 0.25, pre, {"kernel": kernel.label, "d": kernel.d, "n": n,
                                              "z_norm2": z2, "C_z": c})


def cor10_slack_z(kernel, beta, delta1, max_doublings=60):
    """Smallest ``z^2 = 2^k / delta1`` with ``cross(0) - cross(z) >= (beta^2/2) (pi/(2 delta1))^(d/2)``."""
    target = beta ** 2 / 2.0 * (math.pi / (2.0 * delta1)) ** (kernel.d / 2.0)
    z2 = 1.0 / delta1
    for _ in range(max_doublings + 1):
        gap = float(psi_l2_gap(kernel, z2))
        if gap >= target:
            return z2, gap, target
        z2 *= 2.0
    raise ConstructionError("no separation vector met the cross-correlation slack", achieved=gap)


def bound_cor10(kernel, d, n):
    d = _check_d(kernel, d)
    n = _check_n(n)
    require_moment_condition(kernel)
    d0, d1, beta, a_k = ak_for(kernel)
    scale = (math.pi / (2.0 * d1)) ** (d / 2.0)
    s = beta / 6.0 * math.sqrt(scale / n)
    z2, gap, target = cor10_slack_z(kernel, beta, d1)
    s_thm9 = math.sqrt(2.0 * gap / n) / 6.0
    pre = (
        Precondition(MOMENT_CONDITION, True),
        _mass_check(kernel, d0, d1, beta),
        Precondition("cross-correlation slack", gap >= target, f"gap {gap:.12g} >= {target:.12g} at |z|^2 = {z2:.6g}"),
        Precondition("s <= discrete-pair threshold at z", s <= s_thm9 * (1 + 1e-12), f"{s:.6g} <= {s_thm9:.6g}"),
    )
    return BoundReport("cor10", s, 0.25, pre, {"kernel": kernel.label, "d": d, "n": n, "delta0": d0,
                                               "delta1": d1, "beta": beta, "A_k": a_k, "z_norm2": z2})


# -- smooth-density bounds ------------------------------------------------

def thm8_construction(kernel, n, norm="rkhs"):
    """Constants of the Gaussian hard-instance construction."""
    n = _check_n(n)
    d = kernel.d
    log_term = math.log(N_PACK) - 1.0 / (N_PACK - 1)
    f = _shrink(d)
    if norm == "rkhs":
        t0, t1, beta, _ = bk_for(kernel)
        sigma2 = 1.0 / (2.0 * t1 * d)
        big_c = beta * t0 / (32.0 * t1) * log_term
        c_nu = big_c / (beta * t0)
        slope = beta * t0 / math.e * f
    elif norm == "l2":
        require_moment_condition(kernel)
        t0, t1, beta, _ = bk_l2_for(kernel)
        sigma2 = 1.0 / (t1 * d)
        c_nu = log_term / (16.0 * t1)
        slope = beta ** 2 * t0 / (2.0 * math.e) * f * (math.pi / (2.0 * t1)) ** (d / 2.0)
    else:
        raise ArgumentError(f"norm must be 'rkhs' or 'l2', got {norm!r}")
    radius = math.sqrt(c_nu / n)
    s_proof = math.sqrt(slope) * radius / (2.0 * N_PACK)
    return {"norm": norm, "t0": t0, "t1": t1, "beta": beta, "sigma2": sigma2, "c_nu": c_nu, "N": N_PACK,
            "radius": radius, "s_proof": s_proof, "dist2_slope": slope, "n": n, "d": d}


def bound_thm8(kernel, d, n):
    d = _check_d(kernel, d)
    n = _check_n(n)
    t0, t1, beta, b_k = bk_for(kernel)
    s = math.sqrt(beta * t0 / (t1 * math.e) * _shrink(d) / n) / 50.0
    cons = thm8_construction(kernel, n, "rkhs")
    pre = (Precondition("supp(nu) != {0}", True), _mass_check(kernel, t0, t1, beta))
    return BoundReport("thm8", s, 0.2, pre, {"kernel": kernel.label, "d": d, "n": n, "t0": t0, "t1": t1,
                                             "beta": beta, "B_k": b_k, "sigma2": cons["sigma2"],
                                             "c_nu": cons["c_nu"], "N": N_PACK, "s_proof": cons["s_proof"]})


def bound_thm13(kernel, d, n):
    d = _check_d(kernel, d)
    n = _check_n(n)
    require_moment_condition(kernel)
    d0, d1, beta, b_k = bk_l2_for(kernel)
    scale = (math.pi / (2.0 * d1)) ** (d / 2.0)
    s = math.sqrt(scale * beta ** 2 * d0 / (d1 * math.e) * _shrink(d) / n) / 50.0
    cons = thm8_construction(kernel, n, "l2")
    pre = (Precondition(MOMENT_CONDITION, True), Precondition("supp(nu) != {0}", True),
           _mass_check(kernel, d0, d1, beta))
    return BoundReport("thm13", s, 0.2, pre, {"kernel": kernel.label, "d": d, "n": n, "delta0": d0, "delta1": d1,
                                              "beta": beta, "B_k": b_k, "sigma2": cons["sigma2"],
                                              "c_nu": cons["c_nu"], "N": N_PACK, "s_proof": cons["s_proof"]})


def thmE1_sample_size(kernel):
    t0, t1, beta, _ = bk_for(kernel)
    return 24.0 * t1 * kernel.nu.total_mass / (beta * t0)


def bound_thmE1(kernel, d, n):
    d = _check_d(kernel, d)
    n = _check_n(n)
    t0, t1, beta, b_k = bk_for(kernel)
    s = math.sqrt(beta * t0 / (t1 * math.e) * _shrink(d) / (2.0 * n)) / 50.0
    need = thmE1_sample_size(kernel)
    pre = (Precondition("supp(nu) != {0}", True), _mass_check(kernel, t0, t1, beta),
           Precondition("n >= 24 t1 Z / (beta t0)", n >= need, f"n = {n}, threshold = {need:.12g}"))
    return BoundReport("thmE1", s, 0.2, pre, {"kernel": kernel.label, "d": d, "n": n, "t0": t0, "t1": t1,
                                              "beta": beta, "B_k": b_k, "n_min": need})


def _two_point_smooth(theorem, c_psi, eps_psi, n):
    c_psi = _positive_arg("c_psi", c_psi)
    eps_psi = _positive_arg("eps_psi", eps_psi)
    n = _check_n(n)
    s = 0.5 * math.sqrt(c_psi / (2.0 * n))
    ok = n >= 1.0 / eps_psi
    pre = (Precondition("n >= 1/eps_psi", ok, f"n = {n}, 1/eps = {1.0 / eps_psi:.12g}"),)
    inputs = {"c_psi": c_psi, "eps_psi": eps_psi, "n": n}
    if not ok:
        inputs["fallback_s"] = 0.5 * math.sqrt(c_psi * eps_psi / (2.0 * n))
        inputs["fallback_floor"] = max(0.25 * math.exp(-eps_psi / 2.0), (1.0 - math.sqrt(eps_psi / 4.0)) / 2.0)
    return BoundReport(theorem, s, 0.25, pre, inputs)


def bound_thm6(c_psi, eps_psi, n):
    return _two_point_smooth("thm6", c_psi, eps_psi, n)


def bound_thm12(c_psi, eps_psi, n):
    return _two_point_smooth("thm12", c_psi, eps_psi, n)


# -- strong-convexity constants -------------------------------------------

@dataclass(frozen=True)
class StrongConvexityEstimate:
    c_psi: float
    eps_psi: float
    sigma2: float
    d: int
    quad_error: float
    f0: float
    mode: str


def sphere_grid(d):
    """Deterministic unit directions; always contains the first coordinate axis."""
    if d == 1:
        return np.array([[1.0]])
    if d == 2:
        phi = np.pi * np.arange(129) / 129
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    elif d == 3:
        m = 1000
        i = np.arange(m) + 0.5
        z = 1.0 - 2.0 * i / m
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (1.0 + 5 ** 0.5) * i
        dirs = np.stack([z, r * np.cos(phi), r * np.sin(phi)], axis=1)
    elif d == 4:
        a = np.linspace(0.0, np.pi, 13)
        b = np.linspace(0.0, np.pi, 13)
        c = np.linspace(0.0, 2.0 * np.pi, 24, endpoint=False)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        dirs = np.stack([np.cos(A), np.sin(A) * np.cos(B), np.sin(A) * np.sin(B) * np.cos(C),
                         np.sin(A) * np.sin(B) * np.sin(C)], axis=-1).reshape(-1, 4)
    else:
        raise ArgumentError("sphere grids are provided for d <= 4")
    axes = np.eye(d)
    return np.concatenate([axes, dirs])


def _objective_parts(kernel, sigma2, r2, mode):
    """``F(r2, c2) = A(r2) - c2 B(r2)`` with ``a`` along the first axis and ``c2 = <e, a>^2/|a|^2``."""
    d = kernel.d
    r2 = np.asarray(r2, dtype=float)

    def parts(s):
        q = 4.0 * sigma2 * s + 1.0
        with np.errstate(over="ignore"):
            base = 4.0 * np.exp(-s * r2[None, :] / q) * s / q ** (1.0 + d / 2.0)
        return base, base * 2.0 * s * r2[None, :] / q

    if mode == "rkhs":
        def f(t):
            a, b = parts(t[:, None])
            return np.stack([a, b], axis=1)
        res = nu_integrate(kernel.nu, f)
    else:
        require_moment_condition(kernel)

        def f2(t1, t2):
            u = t1[:, None, None]
            v = t2[None, :, None]
            with np.errstate(over="ignore"):
                s = 1.0 / (1.0 / u + 1.0 / v)
                w = (np.pi / (u + v)) ** (d / 2.0)
            a, b = parts(s)
            return np.stack([w * a, w * b], axis=2)
        res = nu_integrate2(kernel.nu, f2)
    if not res.converged:
        raise PreconditionError("quadrature for the strong-convexity objective did not converge",
                                f"error estimate {res.error:.3e}")
    return res.value[0], res.value[1], float(res.error)


def convexity_objective(kernel, sigma2, a, e, mode="rkhs"):
    """The strong-convexity objective at displacement ``a`` and direction ``e``."""
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    r2 = float(a @ a)
    c2 = 0.0 if r2 == 0 else float((e @ a) ** 2 / r2)
    A, B, _ = _objective_parts(kernel, sigma2, np.array([r2]), mode)
    return float(A[0] - c2 * B[0])


def estimate_cpsi_eps(kernel, sigma2, d=None, mode="rkhs", grid_points=200, rel_width=1e-6):
    """Largest ``eps`` (doubling then bisection) with ``min F >= F(0)/2`` on ``|a|^2 <= eps``."""
    d = _check_d(kernel, d)
    if d > 4:
        raise ArgumentError("estimate_cpsi_eps supports d <= 4")
    if mode not in ("rkhs", "l2"):
        raise ArgumentError(f"mode must be 'rkhs' or 'l2', got {mode!r}")
    sigma2 = _positive_arg("sigma2", sigma2)
    c2 = sphere_grid(d)[:, 0] ** 2
    c2max = float(c2.max())
    err = [0.0]

    def min_f(eps):
        r2 = eps * np.linspace(0.0, 1.0, grid_points + 1)[1:]
        A, B, e = _objective_parts(kernel, sigma2, r2, mode)
        err[0] = max(err[0], e)
        return float(np.min(A - c2max * B))

    A0, _, e0 = _objective_parts(kernel, sigma2, np.array([0.0]), mode)
    f0 = float(A0[0])
    if not f0 > 0:
        raise InternalConsistencyError(f"objective at zero displacement is {f0!r}, expected > 0")
    half = f0 / 2.0
    eps = 1.0
    if min_f(eps) >= half:
        good, bad = eps, None
        for _ in range(60):
            if min_f(2.0 * good) >= half:
                good *= 2.0
            else:
                bad = 2.0 * good
                break
        if bad is None:
            return StrongConvexityEstimate(min_f(good), good, sigma2, d, max(err[0], e0), f0, mode)
    else:
        bad, good = eps, None
        for _ in range(60):
            if min_f(bad / 2.0) >= half:
                good = bad / 2.0
                break
            bad /= 2.0
        if good is None:
            raise ConstructionError("no admissible radius found for the strong-convexity objective")
    while bad - good > rel_width * good:
        mid = 0.5 * (good + bad)
        if min_f(mid) >= half:
            good = mid
        else:
            bad = mid
    return StrongConvexityEstimate(min_f(good), good, sigma2, d, max(err[0], e0), f0, mode)


def sandwich(kernel, n, delta=0.5):
    """Lower thresholds next to the concentration upper bound at the same ``n``."""
    from .estimator import hoeffding_bound
    from .kernels import kernel_constants

    consts = kernel_constants(kernel)
    out = {"n": n, "rkhs_lower": bound_thm8(kernel, kernel.d, n).s,
           "rkhs_upper": hoeffding_bound(consts.C_k_rkhs, n, delta)}
    if moment_condition(kernel) and consts.C_k_l2 is not None:
        out["l2_lower"] = bound_thm13(kernel, kernel.d, n).s
        out["l2_upper"] = hoeffding_bound(consts.C_k_l2, n, delta)
    return out


def psi_gap_at(kernel, z_norm2):
    return float(eval_psi(kernel, 0.0) - eval_psi(kernel, z_norm2))

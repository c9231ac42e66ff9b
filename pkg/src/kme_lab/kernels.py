"""Radial kernels represented by their Schoenberg measure.

A radial kernel on R^d has the form ``k(x, y) = psi(|x - y|^2)`` with
``psi(r2) = integral of exp(-t r2) dnu(t)``.  Here ``nu`` is a finite
measure on ``[0, inf)`` built from point masses, scaled Gamma densities and
scaled inverse-Gamma densities, which covers Gaussian, Gaussian-mixture,
inverse multiquadric and Matern kernels exactly.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln

from ._quadrature import QuadResult, gk_adaptive
from .errors import ArgumentError, IntegrationError, PreconditionError

ABS_TOL = 1e-10
REL_TOL = 1e-8
MAX_PANELS = 4000

FAMILIES = ("gaussian", "gaussian_mixture", "inverse_multiquadric", "matern", "custom")
_ALIASES = {"mixture": "gaussian_mixture", "imq": "inverse_multiquadric"}

MOMENT_CONDITION = "inverse-moment condition: integral of t^(-d/2) dnu must be finite"


def _positive(name, value):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ArgumentError(f"{name} must be a finite positive number, got {value!r}")
    return value


@dataclass(frozen=True)
class NuMeasure:
    """Finite nonnegative measure on [0, inf).

    ``atoms`` holds ``(t, mass)`` pairs.  ``gamma_components`` holds
    ``(shape, rate, weight)`` for ``weight * Gamma(shape, rate)`` and
    ``invgamma_components`` holds ``(shape, scale, weight)`` for
    ``weight * InvGamma(shape, scale)``.
    """

    atoms: tuple = ()
    gamma_components: tuple = ()
    invgamma_components: tuple = ()

    def __post_init__(self):
        atoms = []
        for item in self.atoms:
            t, m = item
            t = float(t)
            if not np.isfinite(t) or t < 0:
                raise ArgumentError(f"atom location must be finite and >= 0, got {t!r}")
            atoms.append((t, _positive("atom mass", m)))
        gam = tuple(
            (_positive("gamma shape", s), _positive("gamma rate", r), _positive("gamma weight", w))
            for s, r, w in self.gamma_components
        )
        inv = tuple(
            (_positive("invgamma shape", a), _positive("invgamma scale", b), _positive("invgamma weight", w))
            for a, b, w in self.invgamma_components
        )
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "gamma_components", gam)
        object.__setattr__(self, "invgamma_components", inv)
        if not gam and not inv and not any(t > 0 for t, _ in atoms):
            raise ArgumentError("nu must put mass somewhere in (0, inf)")

    @property
    def total_mass(self):
        return (sum(m for _, m in self.atoms)
                + sum(w for *_, w in self.gamma_components)
                + sum(w for *_, w in self.invgamma_components))

    @property
    def has_density(self):
        return bool(self.gamma_components or self.invgamma_components)

    def atom_arrays(self):
        t = np.array([a[0] for a in self.atoms], dtype=float)
        m = np.array([a[1] for a in self.atoms], dtype=float)
        return t, m


@dataclass(frozen=True)
class RadialKernel:
    nu: NuMeasure
    d: int
    label: str = "custom"
    params: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 1:
            raise ArgumentError(f"dimension d must be a positive integer, got {self.d!r}")
        object.__setattr__(self, "d", int(self.d))
        if self.label not in FAMILIES:
            raise ArgumentError(f"unknown kernel family {self.label!r}")

    def __call__(self, x, y):
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return eval_psi(self, np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class KernelConstants:
    Z_nu: float
    C_k_rkhs: float
    C_k_l2: float | None
    psi_l2_sq: float | None


# -- constructors ---------------------------------------------------------

def gaussian_kernel(eta, d):
    """``exp(-|x - y|^2 / (2 eta^2))``."""
    eta = _positive("eta", eta)
    nu = NuMeasure(atoms=((1.0 / (2.0 * eta * eta), 1.0),))
    return RadialKernel(nu, d, "gaussian", {"eta": eta})


def gaussian_mixture_kernel(betas, etas, d):
    """``sum_i beta_i exp(-|x - y|^2 / (2 eta_i^2))``."""
    betas = [_positive("beta", b) for b in betas]
    etas = [_positive("eta", e) for e in etas]
    if len(betas) != len(etas) or not betas:
        raise ArgumentError("betas and etas must be non-empty and of equal length")
    nu = NuMeasure(atoms=tuple((1.0 / (2.0 * e * e), b) for b, e in zip(betas, etas)))
    return RadialKernel(nu, d, "gaussian_mixture", {"betas": betas, "etas": etas})


def imq_kernel(c, gamma, d):
    """Inverse multiquadric ``(c^2 + |x - y|^2)^(-gamma)``."""
    c = _positive("c", c)
    gamma = _positive("gamma", gamma)
    nu = NuMeasure(gamma_components=((gamma, c * c, c ** (-2.0 * gamma)),))
    return RadialKernel(nu, d, "inverse_multiquadric", {"c": c, "gamma": gamma})


def matern_kernel(c, tau, d):
    """Matern kernel with smoothness ``tau > d/2`` and inverse length scale ``c``.

    Normalised so that ``k(x, x) = 1``.
    """
    c = _positive("c", c)
    tau = _positive("tau", tau)
    if isinstance(d, (int, np.integer)) and tau <= d / 2:
        raise ArgumentError(f"Matern kernel needs tau > d/2, got tau={tau}, d={d}")
    nu = NuMeasure(invgamma_components=((tau - d / 2.0, c * c / 4.0, 1.0),))
    return RadialKernel(nu, d, "matern", {"c": c, "tau": tau})


def custom_kernel(d, atoms=(), gamma=(), invgamma=()):
    nu = NuMeasure(tuple(map(tuple, atoms)), tuple(map(tuple, gamma)), tuple(map(tuple, invgamma)))
    return RadialKernel(nu, d, "custom", {})


def kernel_from_spec(spec):
    """Build a kernel from its JSON description."""
    if not isinstance(spec, dict):
        raise ArgumentError("kernel spec must be a JSON object")
    family = _ALIASES.get(spec.get("family"), spec.get("family"))
    if family not in FAMILIES:
        raise ArgumentError(f"unknown kernel family {spec.get('family')!r}")
    if "d" not in spec:
        raise ArgumentError("kernel spec needs 'd'")
    d = spec["d"]
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)) or d < 1:
        raise ArgumentError(f"dimension d must be a positive integer, got {d!r}")
    p = spec.get("params", {})
    try:
        if family == "gaussian":
            return gaussian_kernel(p["eta"], d)
        if family == "gaussian_mixture":
            return gaussian_mixture_kernel(p["betas"], p["etas"], d)
        if family == "inverse_multiquadric":
            return imq_kernel(p["c"], p["gamma"], d)
        if family == "matern":
            return matern_kernel(p["c"], p["tau"], d)
        src = spec if "atoms" in spec or "gamma" in spec or "invgamma" in spec else p
        return custom_kernel(d, src.get("atoms", ()), src.get("gamma", ()), src.get("invgamma", ()))
    except KeyError as exc:
        raise ArgumentError(f"kernel spec for {family} is missing parameter {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ArgumentError):
            raise
        raise ArgumentError(f"malformed kernel spec: {exc}") from None


def kernel_to_spec(kernel):
    if kernel.label == "custom":
        nu = kernel.nu
        return {"family": "custom", "d": kernel.d,
                "atoms": [list(a) for a in nu.atoms],
                "gamma": [list(g) for g in nu.gamma_components],
                "invgamma": [list(g) for g in nu.invgamma_components]}
    return {"family": kernel.label, "d": kernel.d, "params": dict(kernel.params)}


# -- quadrature over nu ---------------------------------------------------

_SPLITS = np.array([-10.0, -4.0, -1.5, 0.0, 1.5, 4.0, 10.0])
_U_MAX = 700.0


class _Density:
    """Log-space change of variables for one Gamma or inverse-Gamma component."""

    def __init__(self, kind, shape, param, weight):
        self.kind = kind
        self.shape = shape
        self.param = param
        self.logc = np.log(weight) + shape * np.log(param) - gammaln(shape)
        self.mode = np.log(shape / param) if kind == "gamma" else np.log(param / shape)
        self.sd = 1.0 / np.sqrt(shape)
        inner = 2.0 / np.pi * np.arctan(_SPLITS)
        self.edges = np.concatenate([[-1.0], inner, [1.0]])

    def nodes(self, s):
        """Map ``s`` in (-1, 1) to ``(t, weight)`` so that sum weight*f(t) integrates f."""
        half = 0.5 * np.pi * s
        u_raw = self.mode + self.sd * np.tan(half)
        u = np.clip(u_raw, -_U_MAX, _U_MAX)
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            if self.kind == "gamma":
                logpdf = self.logc + self.shape * u - self.param * np.exp(u)
            else:
                logpdf = self.logc - self.shape * u - self.param * np.exp(-u)
            logjac = np.log(self.sd * 0.5 * np.pi) - 2.0 * np.log(np.cos(half))
            w = np.exp(logpdf + logjac)
        w = np.where((np.abs(u_raw) < _U_MAX) & np.isfinite(w), w, 0.0)
        return np.exp(u), w


def _densities(nu):
    out = [_Density("gamma", s, r, w) for s, r, w in nu.gamma_components]
    out += [_Density("invgamma", a, b, w) for a, b, w in nu.invgamma_components]
    return out


def _weighted(values, w):
    values = np.asarray(values, dtype=float)
    w = w.reshape((-1,) + (1,) * (values.ndim - 1))
    with np.errstate(invalid="ignore", over="ignore"):
        prod = values * w
    return np.where(w > 0, prod, 0.0)


def _combine(parts, value):
    err = float(sum(p.error for p in parts))
    panels = int(sum(p.panels for p in parts))
    scale = float(np.max(np.abs(value))) if np.size(value) else 0.0
    ok = all(p.converged for p in parts) and err <= max(ABS_TOL, REL_TOL * scale) * max(1, len(parts))
    return QuadResult(value, err, panels, ok)


def nu_integrate(nu, f, abs_tol=ABS_TOL, rel_tol=REL_TOL, max_panels=MAX_PANELS):
    """Integrate ``f`` against ``nu``.

    ``f`` maps a 1-D array of ``t`` values to an array with that leading axis.
    Atoms are summed exactly; each density component is integrated adaptively.
    """
    ta, ma = nu.atom_arrays()
    value = 0.0
    if ta.size:
        value = np.tensordot(ma, np.asarray(f(ta), dtype=float), axes=([0], [0]))
    parts = []
    for comp in _densities(nu):
        def g(s, comp=comp):
            t, w = comp.nodes(s)
            return _weighted(f(t), w)
        res = gk_adaptive(g, comp.edges, abs_tol, rel_tol, max_panels)
        parts.append(res)
        value = value + res.value
    return _combine(parts, np.asarray(value, dtype=float))


def nu_integrate2(nu, f2, abs_tol=ABS_TOL, rel_tol=REL_TOL, max_panels=MAX_PANELS):
    """Integrate a symmetric ``f2(t1, t2)`` against ``nu x nu``.

    ``f2`` receives 1-D arrays of sizes m1 and m2 and returns shape
    ``(m1, m2, *out)``.  Atom-atom blocks are exact, atom-density blocks are
    1-D and density-density blocks use nested adaptive rules.
    """
    ta, ma = nu.atom_arrays()
    dens = _densities(nu)
    parts = []
    value = 0.0
    if ta.size:
        block = np.asarray(f2(ta, ta), dtype=float)
        value = np.tensordot(np.outer(ma, ma), block, axes=([0, 1], [0, 1]))
    for comp in dens:
        if ta.size:
            def g(s, comp=comp):
                t, w = comp.nodes(s)
                vals = np.tensordot(ma, np.asarray(f2(ta, t), dtype=float), axes=([0], [0]))
                return _weighted(vals, w)
            res = gk_adaptive(g, comp.edges, abs_tol, rel_tol, max_panels)
            parts.append(res)
            value = value + 2.0 * res.value
    for i, ci in enumerate(dens):
        for j in range(i, len(dens)):
            cj = dens[j]
            inner_failed = []

            def outer(s1, ci=ci, cj=cj, inner_failed=inner_failed):
                t1, w1 = ci.nodes(s1)

                def inner(s2):
                    t2, w2 = cj.nodes(s2)
                    vals = np.moveaxis(np.asarray(f2(t1, t2), dtype=float), 1, 0)
                    return _weighted(vals, w2)

                res = gk_adaptive(inner, cj.edges, 0.1 * abs_tol, 0.1 * rel_tol, max_panels)
                if not res.converged:
                    inner_failed.append(res.error)
                return _weighted(res.value, w1)

            res = gk_adaptive(outer, ci.edges, abs_tol, rel_tol, max_panels)
            if inner_failed:
                res = QuadResult(res.value, max(res.error, max(inner_failed)), res.panels, False)
            parts.append(res)
            value = value + (1.0 if i == j else 2.0) * res.value
    return _combine(parts, np.asarray(value, dtype=float))


def _require(res, what):
    if not res.converged:
        raise IntegrationError(f"quadrature for {what} did not converge", res.error)
    return res.value


def _chunks(x, size):
    for start in range(0, x.size, size):
        yield slice(start, min(start + size, x.size))


def _as_r2(r2, name="r2"):
    arr = np.asarray(r2, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ArgumentError(f"{name} must be finite and >= 0")
    return arr


def _scalar_out(arr, template):
    return float(np.asarray(arr).reshape(-1)[0]) if np.ndim(template) == 0 else arr.reshape(np.shape(template))


# -- psi and relatives ----------------------------------------------------

def eval_psi(kernel, r2):
    """``psi(r2) = integral of exp(-t r2) dnu(t)``; accepts scalars or arrays."""
    arr = _as_r2(r2)
    flat = arr.ravel()
    nu = kernel.nu
    out = np.zeros_like(flat)
    ta, ma = nu.atom_arrays()
    if ta.size:
        out += ma @ np.exp(-np.outer(ta, flat))
    for shape, rate, w in nu.gamma_components:
        out += w * np.exp(-shape * np.log1p(flat / rate))
    if nu.invgamma_components:
        only = NuMeasure(invgamma_components=nu.invgamma_components)
        for sl in _chunks(flat, 4096):
            r = flat[sl]
            res = nu_integrate(only, lambda t: np.exp(-np.outer(t, r)))
            out[sl] += _require(res, "psi")
    return _scalar_out(out, r2)


def psi_gap(kernel, r2):
    """``psi(0) - psi(r2)`` evaluated without cancellation."""
    arr = _as_r2(r2)
    flat = arr.ravel()
    nu = kernel.nu
    out = np.zeros_like(flat)
    ta, ma = nu.atom_arrays()
    if ta.size:
        out += ma @ (-np.expm1(-np.outer(ta, flat)))
    for shape, rate, w in nu.gamma_components:
        out += -w * np.expm1(-shape * np.log1p(flat / rate))
    if nu.invgamma_components:
        only = NuMeasure(invgamma_components=nu.invgamma_components)
        for sl in _chunks(flat, 4096):
            r = flat[sl]
            res = nu_integrate(only, lambda t: -np.expm1(-np.outer(t, r)))
            out[sl] += _require(res, "psi gap")
    return _scalar_out(out, r2)


def inverse_moment(nu, p):
    """``integral of t^(-p) dnu``; ``inf`` when it diverges."""
    total = 0.0
    for t, m in nu.atoms:
        if t == 0.0:
            return float("inf")
        total += m * t ** (-p)
    for shape, rate, w in nu.gamma_components:
        if shape <= p:
            return float("inf")
        total += w * np.exp(p * np.log(rate) + gammaln(shape - p) - gammaln(shape))
    for a, b, w in nu.invgamma_components:
        total += w * np.exp(gammaln(a + p) - gammaln(a) - p * np.log(b))
    return float(total)


def moment_condition(kernel):
    """True when ``integral of t^(-d/2) dnu`` is finite."""
    return bool(np.isfinite(inverse_moment(kernel.nu, kernel.d / 2.0)))


def require_moment_condition(kernel):
    if not moment_condition(kernel):
        raise PreconditionError(MOMENT_CONDITION, f"fails for {kernel.label} kernel in d={kernel.d}")


def spectral_density(kernel, w_norm2):
    """Spectral density ``integral of (2t)^(-d/2) exp(-|w|^2/(4t)) dnu`` as a function of ``|w|^2``."""
    require_moment_condition(kernel)
    arr = _as_r2(w_norm2, "w_norm2")
    flat = arr.ravel()
    h = kernel.d / 2.0
    nu = kernel.nu
    out = np.zeros_like(flat)
    ta, ma = nu.atom_arrays()
    if ta.size:
        out += ma @ ((2.0 * ta[:, None]) ** (-h) * np.exp(-flat[None, :] / (4.0 * ta[:, None])))
    if nu.has_density:
        only = NuMeasure(gamma_components=nu.gamma_components, invgamma_components=nu.invgamma_components)
        for sl in _chunks(flat, 4096):
            r = flat[sl]

            def f(t, r=r):
                t = t[:, None]
                with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                    v = (2.0 * t) ** (-h) * np.exp(-r[None, :] / (4.0 * t))
                return np.where(np.isfinite(v), v, 0.0)
            out[sl] += _require(nu_integrate(only, f), "spectral density")
    return _scalar_out(out, w_norm2)


def _l2_pair_values(nu, d, z2, var):
    """``integral integral (pi/D)^(d/2) exp(-t1 t2 z2 / D) dnu dnu`` with ``D = t1 + t2 + 2 t1 t2 var``."""
    flat = np.asarray(z2, dtype=float).ravel()
    h = d / 2.0
    out = np.empty_like(flat)
    for sl in _chunks(flat, 64):
        r = flat[sl]

        def f2(t1, t2, r=r):
            a = t1[:, None, None]
            b = t2[None, :, None]
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                den = a + b + 2.0 * a * b * var
                v = (np.pi / den) ** h * np.exp(-(a * b / den) * r[None, None, :])
            return np.where(np.isfinite(v), v, 0.0)
        out[sl] = _require(nu_integrate2(nu, f2), "L2 cross term")
    return out


def _l2_gap_values(nu, d, z2, var):
    """``integral integral (pi/D)^(d/2) (1 - exp(-t1 t2 z2 / D)) dnu dnu``."""
    flat = np.asarray(z2, dtype=float).ravel()
    h = d / 2.0
    out = np.empty_like(flat)
    for sl in _chunks(flat, 64):
        r = flat[sl]

        def f2(t1, t2, r=r):
            a = t1[:, None, None]
            b = t2[None, :, None]
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                den = a + b + 2.0 * a * b * var
                v = (np.pi / den) ** h * -np.expm1(-(a * b / den) * r[None, None, :])
            return np.where(np.isfinite(v), v, 0.0)
        out[sl] = _require(nu_integrate2(nu, f2), "L2 gap term")
    return out


def psi_l2_cross(kernel, z_norm2):
    """``integral of psi(y) psi(y + z) dy`` as a function of ``|z|^2``."""
    require_moment_condition(kernel)
    arr = _as_r2(z_norm2, "z_norm2")
    return _scalar_out(_l2_pair_values(kernel.nu, kernel.d, arr, 0.0), z_norm2)


def psi_l2_gap(kernel, z_norm2):
    """``psi_l2_cross(0) - psi_l2_cross(z)`` without cancellation."""
    require_moment_condition(kernel)
    arr = _as_r2(z_norm2, "z_norm2")
    return _scalar_out(_l2_gap_values(kernel.nu, kernel.d, arr, 0.0), z_norm2)


# -- scalar constants -----------------------------------------------------

def _single_gamma(kernel):
    nu = kernel.nu
    if nu.atoms or nu.invgamma_components or len(nu.gamma_components) != 1:
        return None
    return nu.gamma_components[0]


def imq_l2_norm_sq(shape, rate, weight, d):
    """Squared L2 norm of ``weight * (rate / (rate + r^2))^shape`` on R^d; needs ``shape > d/4``."""
    if shape <= d / 4.0:
        raise PreconditionError("square integrability needs gamma > d/4", f"gamma={shape}, d={d}")
    return float(weight ** 2 * rate ** (d / 2.0) * np.pi ** (d / 2.0)
                 * np.exp(gammaln(2 * shape - d / 2.0) - gammaln(2 * shape)))


@lru_cache(maxsize=256)
def kernel_constants(kernel):
    z = float(kernel.nu.total_mass)
    d = kernel.d
    single = _single_gamma(kernel)
    psi_sq = c_l2 = None
    if single is not None and single[0] > d / 4.0:
        psi_sq = imq_l2_norm_sq(*single, d)
        c_l2 = psi_sq
    elif moment_condition(kernel):
        psi_sq = float(psi_l2_cross(kernel, 0.0))
        c_l2 = z * (np.pi / 2.0) ** (d / 2.0) * inverse_moment(kernel.nu, d / 2.0)
    return KernelConstants(z, z, c_l2, psi_sq)


def nu_interval_mass(kernel, lo, hi):
    """``nu([lo, hi])`` for the closed interval; ``hi`` may be ``inf``."""
    lo = float(lo)
    hi = float(hi)
    if np.isnan(lo) or np.isnan(hi) or lo < 0:
        raise ArgumentError("interval endpoints must satisfy 0 <= lo")
    if lo > hi:
        raise ArgumentError(f"empty interval: lo={lo} > hi={hi}")
    nu = kernel.nu if isinstance(kernel, RadialKernel) else kernel
    total = sum(m for t, m in nu.atoms if lo <= t <= hi)
    for shape, rate, w in nu.gamma_components:
        upper = 1.0 if np.isinf(hi) else gammainc(shape, rate * hi)
        total += w * max(upper - gammainc(shape, rate * lo), 0.0)
    for a, b, w in nu.invgamma_components:
        # P(T <= x) = Q(a, b/x) for T ~ InvGamma(a, b)
        upper = 1.0 if np.isinf(hi) else (gammaincc(a, b / hi) if hi > 0 else 0.0)
        lower = gammaincc(a, b / lo) if lo > 0 else 0.0
        total += w * max(upper - lower, 0.0)
    return float(min(total, nu.total_mass))


def upper_tail_point(kernel, mass):
    """``sup{t : nu([t, inf)) >= mass}`` for ``0 < mass <= Z``."""
    nu = kernel.nu
    z = nu.total_mass
    if not 0 < mass <= z * (1 + 1e-15):
        raise ArgumentError(f"tail mass must lie in (0, Z], got {mass}")

    def tail(t):
        return nu_interval_mass(nu, t, np.inf)

    lo, hi = 0.0, 1.0
    while tail(hi) >= mass:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise ArgumentError("tail search diverged")
    if lo == 0.0:
        lo = hi
        while lo > 1e-300 and tail(lo) < mass:
            hi, lo = lo, lo / 2.0
        if tail(lo) < mass:
            return 0.0
    for _ in range(200):
        mid = np.sqrt(lo * hi) if hi / lo > 1.0 + 1e-15 else 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if tail(mid) >= mass:
            lo = mid
        else:
            hi = mid
    for t, _ in sorted(nu.atoms, reverse=True):
        if lo < t <= hi and tail(t) >= mass:
            return t
    return lo


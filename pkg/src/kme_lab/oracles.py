"""Independent numerical oracles for the closed-form geometry.

None of these routines reuse the Gaussian-convolution formulas of
``geometry``.  The Fourier-side oracles integrate the spectral density in
polar coordinates, the Gauss-Hermite and Monte-Carlo routines work directly
with kernel evaluations, and ``integrate_nu`` exposes the raw quadrature over
``nu``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import ArgumentError
from .kernels import nu_integrate, require_moment_condition, spectral_density


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    panels: int
    converged: bool


_TAIL_PROBES = ((300.0, 600.0), (100.0, 200.0), (30.0, 60.0))
_U_CUT = 700.0


def _log_density(kind, shape, param, weight, u):
    logc = np.log(weight) + shape * np.log(param) - gammaln(shape)
    if kind == "gamma":
        return logc + shape * u - param * np.exp(u)
    return logc - shape * u - param * np.exp(-u)


def _tail_excess(f, nu):
    """Extrapolated mass of the log-t integrand beyond the quadrature cut-off.

    Returns ``inf`` when the integrand does not decay towards either end.
    """
    comps = [("gamma",) + c for c in nu.gamma_components] + [("invgamma",) + c for c in nu.invgamma_components]
    total = 0.0
    for comp in comps:
        for sign in (-1.0, 1.0):
            for near, far in _TAIL_PROBES:
                u = sign * np.array([near, far])
                with np.errstate(all="ignore"):
                    g = np.abs(np.asarray(f(np.exp(u)), dtype=float) * np.exp(_log_density(*comp, u)))
                if np.all(np.isfinite(g)):
                    break
            else:
                continue
            if g[0] == 0.0:
                continue
            if g[1] >= g[0]:
                return np.inf
            rate = np.log(g[0] / max(g[1], np.finfo(float).tiny)) / (far - near)
            total += g[1] * np.exp(-rate * (_U_CUT - far)) / rate
    return total


def integrate_nu(f, kernel, abs_tol=1e-10, rel_tol=1e-8, max_panels=4000):
    """``integral of f(t) dnu(t)`` for a scalar function ``f``.

    ``f`` may be vectorised; if it is not, it is applied elementwise.  The
    converged flag also accounts for mass the log-space rule cannot reach, so
    a divergent moment integral is reported as unconverged.
    """
    def vec(t):
        try:
            out = np.asarray(f(t), dtype=float)
            if out.shape == t.shape:
                return out
        except (TypeError, ValueError, ZeroDivisionError, OverflowError):
            pass
        out = []
        for x in t:
            try:
                out.append(float(f(x)))
            except (ZeroDivisionError, OverflowError):
                out.append(np.inf)
        return np.array(out)

    with np.errstate(over="ignore"):
        res = nu_integrate(kernel.nu, vec, abs_tol, rel_tol, max_panels)
    value = float(res.value)
    error = float(res.error) + _tail_excess(vec, kernel.nu)
    tol = max(abs_tol, rel_tol * abs(value))
    return QuadratureResult(value, error, res.panels, bool(res.converged and error <= tol * 2))


# -- polar quadrature of Fourier-side integrals ---------------------------

def _gl_composite(upper, panels, order=16):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, upper, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _sphere_area(k):
    """Surface area of the unit sphere S^k in R^(k+1)."""
    return float(2.0 * np.exp((k + 1) / 2.0 * np.log(np.pi) - gammaln((k + 1) / 2.0)))


def _angular_one_minus_cos(d, x, m):
    """``integral over S^(d-1) of (1 - cos(x u_1)) du`` at each entry of ``x``."""
    if d == 1:
        return 2.0 * (1.0 - np.cos(x))
    g, gw = np.polynomial.legendre.leggauss(m)
    theta = 0.5 * np.pi * (g + 1.0)
    wt = 0.5 * np.pi * gw * np.sin(theta) ** (d - 2)
    inner = (1.0 - np.cos(np.outer(x, np.cos(theta)))) @ wt
    return _sphere_area(d - 2) * inner


@lru_cache(maxsize=64)
def _lambda_table(kernel, upper, panels):
    r, w = _gl_composite(upper, panels)
    return r, w, np.asarray(spectral_density(kernel, r * r))


def _radial_dist2(kernel, g0, g1, power, tol):
    d = kernel.d
    if d > 5:
        raise ArgumentError("radial oracles support d <= 5")
    if g0.mu.size != d or g1.mu.size != d:
        raise ArgumentError("dimension mismatch")
    if not np.isclose(g0.sigma2, g1.sigma2, rtol=1e-12, atol=0.0):
        raise ArgumentError("oracles assume a shared variance")
    s2 = g0.sigma2
    delta = float(np.linalg.norm(g0.mu - g1.mu))
    if delta == 0.0:
        return QuadratureResult(0.0, 0.0, 0, True)
    upper = float(np.sqrt(60.0 / s2))
    coef = 2.0 * (2.0 * np.pi) ** (-d / 2.0) if power == 1 else 2.0

    def run(panels, m):
        r, w, lam = _lambda_table(kernel, upper, panels)
        ang = _angular_one_minus_cos(d, delta * r, m)
        return coef * float(np.sum(w * r ** (d - 1) * np.exp(-s2 * r * r) * lam ** power * ang))

    fine = run(400, 200)
    err = abs(fine - run(200, 200)) + abs(fine - run(400, 400))
    return QuadratureResult(fine, err, 400, err <= tol * (1.0 + abs(fine)))


def bochner_rkhs_oracle(kernel, g0, g1, tol=1e-8):
    """Squared RKHS distance from the spectral representation, by polar quadrature."""
    return _radial_dist2(kernel, g0, g1, 1, tol)


def l2_dist_oracle(kernel, g0, g1, tol=1e-8):
    """Squared L2 distance from the squared spectral density, by polar quadrature."""
    require_moment_condition(kernel)
    return _radial_dist2(kernel, g0, g1, 2, tol)


def strong_convexity_oracle(kernel, sigma2, a, e, mode="rkhs", panels=400):
    """Spectral-side value of the strong-convexity objective for d <= 3.

    ``2 (2 pi)^(-d/2) integral of exp(-sigma2 |w|^2) <e, w>^2 cos<a, w> lambda(w) dw``
    in RKHS mode; L2 mode replaces ``(2 pi)^(-d/2) lambda`` with ``lambda^2``.
    """
    d = kernel.d
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    upper = float(np.sqrt(60.0 / sigma2))
    r, w, lam = _lambda_table(kernel, upper, panels)
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
        dw = np.array([1.0, 1.0])
    elif d == 2:
        k = 256
        phi = 2.0 * np.pi * np.arange(k) / k
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        dw = np.full(k, 2.0 * np.pi / k)
    elif d == 3:
        g, gw = np.polynomial.legendre.leggauss(96)
        k = 192
        phi = 2.0 * np.pi * np.arange(k) / k
        ct = np.repeat(g[:, None], k, axis=1)
        st = np.sqrt(1.0 - ct * ct)
        dirs = np.stack([ct, st * np.cos(phi)[None, :], st * np.sin(phi)[None, :]], axis=-1).reshape(-1, 3)
        dw = (gw[:, None] * np.full(k, 2.0 * np.pi / k)[None, :]).ravel()
    else:
        raise ArgumentError("strong_convexity_oracle supports d <= 3")
    proj_e = dirs @ e
    proj_a = dirs @ a
    ang = (np.cos(np.outer(r, proj_a)) * (proj_e ** 2)[None, :]) @ dw
    if mode == "rkhs":
        weight = 2.0 * (2.0 * np.pi) ** (-d / 2.0) * lam
    else:
        weight = 2.0 * lam ** 2
    return float(np.sum(w * r ** (d + 1) * np.exp(-sigma2 * r * r) * weight * ang))


# -- expectations ---------------------------------------------------------

def gauss_hermite_expect(f, g, order=40):
    """``E f(X)`` for ``X ~ g`` by tensor Gauss-Hermite; ``f`` maps ``(m, d)`` to ``(m,)``."""
    if order < 2:
        raise ArgumentError("order must be >= 2")
    d = g.d
    if d > 3:
        raise ArgumentError("tensor Gauss-Hermite is limited to d <= 3; use mc_expect")
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / np.sqrt(2.0 * np.pi)
    grids = np.meshgrid(*([z] * d), indexing="ij")
    pts = g.mu + np.sqrt(g.sigma2) * np.stack([x.ravel() for x in grids], axis=1)
    wts = np.ones(1)
    for _ in range(d):
        wts = np.outer(wts, w).ravel()
    return float(np.dot(wts, np.asarray(f(pts), dtype=float)))


def mc_expect(f, sampler, n_samples, seed, chunk=1_000_000):
    """Monte-Carlo mean and standard error of ``f(sampler(rng, m))``."""
    if n_samples < 2:
        raise ArgumentError("n_samples must be >= 2")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        vals = np.asarray(f(sampler(rng, m)), dtype=float)
        total += float(vals.sum())
        total_sq += float(np.dot(vals, vals))
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    return mean, float(np.sqrt(var / n_samples))


def mc_agrees(estimate, target, n_samples, seed, sigmas=3.0):
    """Check ``|mean - target| <= sigmas * se``; one retry with four times the samples.

    ``estimate(n, seed)`` must return ``(mean, se)``.
    """
    mean, se = estimate(n_samples, seed)
    if abs(mean - target) <= sigmas * se:
        return True, mean, se
    mean, se = estimate(4 * n_samples, seed + 1)
    return abs(mean - target) <= sigmas * se, mean, se

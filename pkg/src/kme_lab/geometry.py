"""Closed-form RKHS and L2 geometry of kernel mean embeddings.

Every quantity here reduces to integrals against ``nu`` of Gaussian
convolution factors.  With ``var`` the total variance carried by the two
arguments, the RKHS pairing of two Gaussian bumps at squared distance ``r2``
is

    integral of (1 + 2 t var)^(-d/2) exp(-t r2 / (1 + 2 t var)) dnu(t)

and the L2 pairing is the ``nu x nu`` integral of

    (pi / D)^(d/2) exp(-t1 t2 r2 / D),   D = t1 + t2 + 2 t1 t2 var.

``var = 0`` pairs two points, ``var = sigma2`` a point and a Gaussian and
``var = 2 sigma2`` two Gaussians.  Distances use the matching ``1 - exp``
forms through ``expm1`` so that tiny separations keep full precision.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _gram
from .errors import ArgumentError, InternalConsistencyError, UnsupportedCaseError
from .kernels import (
    NuMeasure,
    RadialKernel,
    _chunks,
    _l2_gap_values,
    _l2_pair_values,
    _require,
    eval_psi,
    nu_integrate,
    psi_gap,
    psi_l2_gap,
    require_moment_condition,
)

CLAMP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class IsotropicGaussian:
    """The measure ``N(mu, sigma2 I)``."""

    mu: np.ndarray
    sigma2: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if mu.ndim != 1 or not np.all(np.isfinite(mu)):
            raise ArgumentError("mu must be a finite vector")
        s2 = float(self.sigma2)
        if not np.isfinite(s2) or s2 <= 0:
            raise ArgumentError(f"sigma2 must be > 0, got {self.sigma2!r}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", s2)

    @property
    def d(self):
        return self.mu.size


@dataclass(frozen=True, eq=False)
class TwoPointDiscrete:
    """``p delta_x + (1 - p) delta_v``."""

    x: np.ndarray
    v: np.ndarray
    p: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if x.shape != v.shape or x.ndim != 1:
            raise ArgumentError("x and v must be vectors of equal length")
        if np.array_equal(x, v):
            raise ArgumentError("x and v must differ")
        p = float(self.p)
        if not 0.0 < p < 1.0:
            raise ArgumentError(f"p must lie strictly between 0 and 1, got {self.p!r}")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "p", p)

    @property
    def d(self):
        return self.x.size

    def as_weighted(self):
        return WeightedPointMeasure(np.stack([self.x, self.v]), np.array([self.p, 1.0 - self.p]))


@dataclass(frozen=True, eq=False)
class WeightedPointMeasure:
    """Finitely supported (possibly signed) measure with total weight one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[0] != w.size or w.size == 0:
            raise ArgumentError("points must be (n, d) with one weight per point")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ArgumentError("points and weights must be finite")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ArgumentError(f"weights must sum to 1, got {math.fsum(w)!r}")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def is_uniform(self):
        return bool(np.all(self.weights == self.weights[0]))


# -- checks ---------------------------------------------------------------

def _check_dim(kernel, *dims):
    for d in dims:
        if d != kernel.d:
            raise ArgumentError(f"dimension mismatch: kernel has d={kernel.d}, argument has d={d}")


def _shared_sigma2(g0, g1):
    if not math.isclose(g0.sigma2, g1.sigma2, rel_tol=1e-12, abs_tol=0.0):
        raise UnsupportedCaseError(
            f"closed forms need equal variances, got {g0.sigma2!r} and {g1.sigma2!r}")
    return g0.sigma2


def clamp_nonnegative(value, scale=1.0):
    """Clamp rounding-level negatives to zero; reject anything larger."""
    value = float(value)
    if value >= 0:
        return value
    if value >= -CLAMP_TOL * max(1.0, abs(float(scale))):
        return 0.0
    raise InternalConsistencyError(f"squared distance evaluated to {value!r}, below the rounding floor")


def _sqdist(a, b):
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.dot(diff, diff))


# -- pairing primitives ---------------------------------------------------

def rkhs_pair(kernel, r2, var, gap=False):
    """RKHS pairing of two Gaussian bumps; ``gap=True`` returns the ``1 - exp`` form."""
    r = np.asarray(r2, dtype=float)
    flat = r.ravel()
    h = kernel.d / 2.0
    nu = kernel.nu
    out = np.zeros_like(flat)
    ta, ma = nu.atom_arrays()
    if ta.size:
        q = 1.0 + 2.0 * ta[:, None] * var
        e = -(ta[:, None] / q) * flat[None, :]
        core = -np.expm1(e) if gap else np.exp(e)
        out += ma @ (q ** (-h) * core)
    if var == 0:
        for shape, rate, w in nu.gamma_components:
            e = -shape * np.log1p(flat / rate)
            out += w * (-np.expm1(e) if gap else np.exp(e))
        rest = NuMeasure(invgamma_components=nu.invgamma_components) if nu.invgamma_components else None
    else:
        rest = (NuMeasure(gamma_components=nu.gamma_components, invgamma_components=nu.invgamma_components)
                if nu.has_density else None)
    if rest is not None:
        for sl in _chunks(flat, 4096):
            rr = flat[sl]

            def f(t, rr=rr):
                q = 1.0 + 2.0 * t[:, None] * var
                e = -(t[:, None] / q) * rr[None, :]
                return q ** (-h) * (-np.expm1(e) if gap else np.exp(e))
            out[sl] += _require(nu_integrate(rest, f), "RKHS pairing")
    return float(out[0]) if r.ndim == 0 else out.reshape(r.shape)


@lru_cache(maxsize=128)
def l2_effective_kernel(kernel):
    """For atom-only ``nu``, the atom kernel whose RKHS pairings equal the L2 pairings."""
    if kernel.nu.has_density:
        return None
    ta, ma = kernel.nu.atom_arrays()
    atoms = []
    for i in range(ta.size):
        for j in range(ta.size):
            s = ta[i] + ta[j]
            atoms.append((ta[i] * ta[j] / s, ma[i] * ma[j] * (np.pi / s) ** (kernel.d / 2.0)))
    return RadialKernel(NuMeasure(atoms=tuple(atoms)), kernel.d, "custom")


def l2_pair(kernel, r2, var, gap=False):
    """L2 pairing of two Gaussian bumps; ``gap=True`` returns the ``1 - exp`` form."""
    require_moment_condition(kernel)
    eff = l2_effective_kernel(kernel)
    if eff is not None:
        return rkhs_pair(eff, r2, var, gap)
    r = np.asarray(r2, dtype=float)
    fn = _l2_gap_values if gap else _l2_pair_values
    out = fn(kernel.nu, kernel.d, r, var)
    return float(out[0]) if r.ndim == 0 else out.reshape(r.shape)


# -- RKHS -----------------------------------------------------------------

def rkhs_gauss_inner(kernel, g0, g1):
    """``<theta_0, theta_1>`` for two Gaussians with a shared variance."""
    _check_dim(kernel, g0.d, g1.d)
    s2 = _shared_sigma2(g0, g1)
    return rkhs_pair(kernel, _sqdist(g0.mu, g1.mu), 2.0 * s2)


def rkhs_gauss_dist2(kernel, g0, g1):
    """Squared RKHS distance between the embeddings of two Gaussians."""
    _check_dim(kernel, g0.d, g1.d)
    s2 = _shared_sigma2(g0, g1)
    return 2.0 * rkhs_pair(kernel, _sqdist(g0.mu, g1.mu), 2.0 * s2, gap=True)


def rkhs_point_gauss_inner(kernel, x, g):
    """``integral of k(x, y) dG(y)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_dim(kernel, x.size, g.d)
    return rkhs_pair(kernel, _sqdist(x, g.mu), g.sigma2)


def _shared_atoms(P0, P1):
    if not (np.array_equal(P0.x, P1.x) and np.array_equal(P0.v, P1.v)):
        raise UnsupportedCaseError("two-point measures must share their atoms; use mmd_weighted instead")


def rkhs_discrete_dist2(kernel, P0, P1):
    _check_dim(kernel, P0.d, P1.d)
    _shared_atoms(P0, P1)
    dp = P0.p - P1.p
    return 2.0 * dp * dp * float(psi_gap(kernel, _sqdist(P0.x, P0.v)))


def _merge_signed(A, B):
    pts = np.concatenate([A.points, B.points])
    w = np.concatenate([A.weights, -B.weights])
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    c = np.zeros(uniq.shape[0])
    np.add.at(c, inv.ravel(), w)
    keep = c != 0.0
    return uniq[keep], c[keep]


def _signed_gap_sum(points, c, gap_fn, block=512):
    """``sum_{i != j} c_i c_j gap(|x_i - x_j|^2)``."""
    m = c.size
    total = 0.0
    for start in range(0, m, block):
        stop = min(start + block, m)
        xi = points[start:stop]
        xj = points[start:]
        r2 = np.sum((xi[:, None, :] - xj[None, :, :]) ** 2, axis=-1)
        iu = np.triu_indices(stop - start, k=1, m=m - start)
        g = gap_fn(r2[iu])
        total += 2.0 * float(np.sum(c[start:stop][iu[0]] * c[start:][iu[1]] * g))
    return total


def mmd_weighted(kernel, A, B):
    """Squared RKHS distance between two weighted point measures."""
    _check_dim(kernel, A.d, B.d)
    pts, c = _merge_signed(A, B)
    if c.size < 2:
        return 0.0
    value = -_signed_gap_sum(pts, c, lambda r2: psi_gap(kernel, r2))
    return clamp_nonnegative(value, kernel.nu.total_mass * float(np.sum(np.abs(c))) ** 2)


def _gram_quadratic(kernel, sample, pair_kernel, pair_fn, block=512):
    """``sum_ij w_i w_j pair(|x_i - x_j|^2)`` for the sample."""
    pts, w = sample.points, sample.weights
    n = w.size
    zero = float(pair_fn(0.0))
    if pair_kernel is not None and not pair_kernel.nu.has_density and sample.is_uniform:
        ta, ma = pair_kernel.nu.atom_arrays()
        off = _gram.pair_sum(pts, ta, ma)
        return (n * zero + 2.0 * off) * w[0] * w[0]
    total = zero * float(np.dot(w, w))
    for start in range(0, n, block):
        stop = min(start + block, n)
        r2 = np.sum((pts[start:stop, None, :] - pts[None, start:, :]) ** 2, axis=-1)
        iu = np.triu_indices(stop - start, k=1, m=n - start)
        vals = pair_fn(r2[iu])
        total += 2.0 * float(np.sum(w[start:stop][iu[0]] * w[start:][iu[1]] * vals))
    return total


def mmd_empirical_vs_gauss(kernel, sample, g):
    """``|mu_P_n - mu_G|^2`` in the RKHS, exact up to quadrature tolerance."""
    _check_dim(kernel, sample.d, g.d)
    gram = _gram_quadratic(kernel, sample, kernel, lambda r2: eval_psi(kernel, r2))
    r2 = np.sum((sample.points - g.mu) ** 2, axis=1)
    cross = float(np.dot(sample.weights, rkhs_pair(kernel, r2, g.sigma2)))
    self_g = rkhs_pair(kernel, 0.0, 2.0 * g.sigma2)
    value = gram - 2.0 * cross + self_g
    return clamp_nonnegative(value, kernel.nu.total_mass * max(1.0, float(np.sum(np.abs(sample.weights))) ** 2))


# -- L2 -------------------------------------------------------------------

def l2_gauss_inner(kernel, g0, g1):
    _check_dim(kernel, g0.d, g1.d)
    s2 = _shared_sigma2(g0, g1)
    return l2_pair(kernel, _sqdist(g0.mu, g1.mu), 2.0 * s2)


def l2_gauss_dist2(kernel, g0, g1):
    """Squared L2 distance between the embeddings of two Gaussians."""
    _check_dim(kernel, g0.d, g1.d)
    s2 = _shared_sigma2(g0, g1)
    return 2.0 * l2_pair(kernel, _sqdist(g0.mu, g1.mu), 2.0 * s2, gap=True)


def l2_point_gauss_inner(kernel, x, g):
    """``<k(., x), theta_G>`` in L2."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_dim(kernel, x.size, g.d)
    return l2_pair(kernel, _sqdist(x, g.mu), g.sigma2)


def l2_discrete_dist2(kernel, P0, P1):
    _check_dim(kernel, P0.d, P1.d)
    _shared_atoms(P0, P1)
    dp = P0.p - P1.p
    return dp * dp * 2.0 * float(psi_l2_gap(kernel, _sqdist(P0.x, P0.v)))


def l2_weighted(kernel, A, B):
    """Squared L2 distance between the embeddings of two weighted point measures."""
    _check_dim(kernel, A.d, B.d)
    require_moment_condition(kernel)
    pts, c = _merge_signed(A, B)
    if c.size < 2:
        return 0.0
    value = -_signed_gap_sum(pts, c, lambda r2: l2_pair(kernel, r2, 0.0, gap=True), block=64)
    scale = float(l2_pair(kernel, 0.0, 0.0)) * float(np.sum(np.abs(c))) ** 2
    return clamp_nonnegative(value, scale)


def l2_empirical_vs_gauss(kernel, sample, g):
    _check_dim(kernel, sample.d, g.d)
    require_moment_condition(kernel)
    eff = l2_effective_kernel(kernel)
    gram = _gram_quadratic(kernel, sample, eff, lambda r2: l2_pair(kernel, r2, 0.0), block=64)
    r2 = np.sum((sample.points - g.mu) ** 2, axis=1)
    cross = float(np.dot(sample.weights, l2_pair(kernel, r2, g.sigma2)))
    self_g = l2_pair(kernel, 0.0, 2.0 * g.sigma2)
    value = gram - 2.0 * cross + self_g
    return clamp_nonnegative(value, float(l2_pair(kernel, 0.0, 0.0)))

"""Truncated power-law interaction kernels and their scaling constants.

The radial kernel is 1/t^(d+s) outside a core of radius r and is frozen at
its core value 1/r^(d+s) inside, which keeps every energy in the package
finite.  This module owns the kernel itself, the normalization constants
(total mass, leading scale, O(1) offset, joint-limit scale), the auxiliary
vector field whose divergence reproduces the kernel, and the angular
densities used for anisotropic variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^(d-1), i.e. d * omega_d."""
    return d * unit_ball_volume(d)


@dataclass(frozen=True)
class KernelParams:
    """Kernel parameters: dimension d >= 2, exponent s >= 1, core radius r > 0."""

    d: int
    s: float
    r: float

    def __post_init__(self):
        if self.d < 2 or int(self.d) != self.d:
            raise ValueError(f"dimension must be an integer >= 2, got {self.d}")
        if self.s < 1.0:
            raise ValueError(f"exponent must satisfy s >= 1, got {self.s}")
        if self.r <= 0.0:
            raise ValueError(f"core radius must be > 0, got {self.r}")


class Anisotropy:
    """Even, positive angular density g on the unit sphere.

    Subclasses implement ``__call__`` on arrays of unit vectors with shape
    (..., d) and ``sphere_integral`` returning the exact integral of g over
    S^(d-1).  ``is_isotropic`` marks the g == 1 fast path.
    """

    is_isotropic = False
    dim = None  # None means any dimension

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sphere_integral(self, d: int) -> float:
        raise NotImplementedError


class Isotropic(Anisotropy):
    """g identically 1."""

    is_isotropic = True

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.ones(xi.shape[:-1])

    def sphere_integral(self, d):
        return sphere_area(d)

    def __repr__(self):
        return "Isotropic()"


class Tabulated(Anisotropy):
    """Planar anisotropy tabulated at uniform angles with linear interpolation.

    The table is symmetrized at construction, g(th) <- (g(th) + g(th+pi))/2,
    so evenness holds exactly for the interpolant.
    """

    dim = 2

    def __init__(self, values):
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or v.size < 4 or v.size % 2:
            raise ValueError("need an even number (>= 4) of samples on [0, 2*pi)")
        if np.any(v <= 0):
            raise ValueError("anisotropy values must be positive")
        half = v.size // 2
        v = 0.5 * (v + np.roll(v, half))
        self.values = v
        self.angles = np.linspace(0.0, 2 * np.pi, v.size, endpoint=False)

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        th = np.arctan2(xi[..., 1], xi[..., 0]) % (2 * np.pi)
        n = self.values.size
        pos = th / (2 * np.pi) * n
        i0 = np.floor(pos).astype(int) % n
        w = pos - np.floor(pos)
        return (1 - w) * self.values[i0] + w * self.values[(i0 + 1) % n]

    def sphere_integral(self, d):
        if d != 2:
            raise ValueError("tabulated anisotropy is planar only")
        # exact integral of the periodic piecewise-linear interpolant
        return float(np.mean(self.values) * 2 * np.pi)

    def __repr__(self):
        return f"Tabulated(n={self.values.size})"


class Dislocation(Anisotropy):
    """Quadratic-form anisotropy from planar isotropic elasticity.

    g(xi) = mu/(8*pi) * [ (1+nu)/(1-nu) * xi_1^2 + (1-2*nu)/(1-nu) * xi_2^2 ]
    with shear modulus mu > 0 and Poisson ratio nu in (-1, 1/2); the slip
    direction is e1.  mu = 8*pi, nu = 0 reduces to g == 1.
    """

    dim = 2

    def __init__(self, mu: float, poisson: float):
        if mu <= 0:
            raise ValueError(f"shear modulus must be > 0, got {mu}")
        if not -1.0 < poisson < 0.5:
            raise ValueError(f"Poisson ratio must lie in (-1, 1/2), got {poisson}")
        self.mu = mu
        self.poisson = poisson
        self.coef1 = mu / (8 * np.pi) * (1 + poisson) / (1 - poisson)
        self.coef2 = mu / (8 * np.pi) * (1 - 2 * poisson) / (1 - poisson)

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.coef1 * xi[..., 0] ** 2 + self.coef2 * xi[..., 1] ** 2

    def sphere_integral(self, d):
        if d != 2:
            raise ValueError("dislocation anisotropy is planar only")
        # integral of xi_i^2 over the unit circle is pi
        return float(np.pi * (self.coef1 + self.coef2))

    def __repr__(self):
        return f"Dislocation(mu={self.mu}, poisson={self.poisson})"


def eval_kernel(p: KernelParams, t) -> np.ndarray:
    """Radial kernel: 1/r^(d+s) on [0, r], 1/t^(d+s) beyond; continuous at r."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("radial argument must be nonnegative")
    dps = p.d + p.s
    with np.errstate(divide="ignore"):
        out = np.where(t <= p.r, p.r ** (-dps), t ** (-dps))
    return out if out.ndim else float(out)


def eval_aniso_kernel(p: KernelParams, g: Anisotropy, z) -> np.ndarray:
    """Anisotropic kernel g(z/|z|) * k(|z|); rejects the zero vector."""
    z = np.asarray(z, dtype=float)
    nrm = np.linalg.norm(z, axis=-1)
    if np.any(nrm == 0):
        raise ValueError("kernel is undefined at the zero vector")
    val = g(z / nrm[..., None]) * eval_kernel(p, nrm)
    return val if np.ndim(val) else float(val)


def lambda_total(p: KernelParams, g: Anisotropy = Isotropic()) -> float:
    """Total kernel mass over R^d: (integral of g) * (d+s)/(d*s*r^s)."""
    return g.sphere_integral(p.d) * (p.d + p.s) / (p.d * p.s * p.r ** p.s)


def lambda_tail(p: KernelParams, g: Anisotropy, radius: float) -> float:
    """Kernel mass beyond |z| > radius (requires radius >= r)."""
    if radius < p.r:
        raise ValueError("tail radius must not cut into the core")
    return g.sphere_integral(p.d) * radius ** (-p.s) / p.s


def sigma_scale(p: KernelParams) -> float:
    """Leading normalization: |log r| at s = 1, else (d+s)/(d+1) * r^(1-s)/(s-1)."""
    if p.s == 1.0:
        if p.r >= 1.0:
            raise ValueError("s = 1 normalization requires r < 1")
        return abs(math.log(p.r))
    return (p.d + p.s) / (p.d + 1) * p.r ** (1.0 - p.s) / (p.s - 1.0)


def alpha_const(d: int, s: float) -> float:
    """O(1) offset in the perimeter expansion: (d+2)/(d+1) at s = 1, else -1/(s-1)."""
    if s == 1.0:
        return (d + 2) / (d + 1)
    return -1.0 / (s - 1.0)


def beta_scale(d: int, s: float, r: float) -> float:
    """Joint-limit normalization (d+s)/(d+1)*(r^(1-s)-1)/(s-1) + 1/(d+1).

    Defined for s > 1 and 0 < r < 1 only; algebraically equals
    sigma_scale + alpha_const there.
    """
    if s <= 1.0:
        raise ValueError("joint-limit scale needs s > 1 (use sigma_scale at s = 1)")
    if not 0.0 < r < 1.0:
        raise ValueError("joint-limit scale needs 0 < r < 1")
    return (d + s) / (d + 1) * (r ** (1.0 - s) - 1.0) / (s - 1.0) + 1.0 / (d + 1)


def field_T(p: KernelParams, x) -> np.ndarray:
    """Vector field whose divergence equals the radial kernel.

    Outside the core: -(1/s) * x / |x|^(d+s).  Inside:
    x/(d r^(d+s)) - (d+s)/(d s r^s) * x/|x|^d.  Both branches agree on |x| = r.
    """
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x, axis=-1)
    if np.any(nrm == 0):
        raise ValueError("field is undefined at the zero vector")
    d, s, r = p.d, p.s, p.r
    outer = -(1.0 / s) * x / nrm[..., None] ** (d + s)
    inner = x / (d * r ** (d + s)) - (d + s) / (d * s * r ** s) * x / nrm[..., None] ** d
    return np.where(nrm[..., None] >= r, outer, inner)


def _hemisphere_rotation(nu: np.ndarray) -> np.ndarray:
    """Orthogonal matrix mapping e_d to nu (Householder when possible)."""
    d = nu.size
    e = np.zeros(d)
    e[-1] = 1.0
    v = nu - e
    n2 = v @ v
    if n2 < 1e-28:
        return np.eye(d)
    return np.eye(d) - 2.0 * np.outer(v, v) / n2


def phi_density(g: Anisotropy, nu, quad_order: int = 64) -> float:
    """Half-sphere first moment of g against the direction nu.

    Integrates g(xi) * (xi . nu) over the hemisphere {xi . nu >= 0}; this is
    the surface-energy density entering the anisotropic perimeter.  d = 2 uses
    adaptive quadrature, d = 3 a product Gauss-Legendre rule of the given order.
    """
    nu = np.asarray(nu, dtype=float)
    d = nu.size
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    if d == 2:
        base = math.atan2(nu[1], nu[0])

        def f(t):
            xi = np.array([math.cos(base + t), math.sin(base + t)])
            return g(xi) * math.cos(t)

        val, _ = quad(f, -np.pi / 2, np.pi / 2, limit=200, epsabs=1e-13, epsrel=1e-13)
        return float(val)
    if d == 3:
        if g.is_isotropic:
            return math.pi
        R = _hemisphere_rotation(nu)
        # polar angle from nu via Gauss-Legendre in cos(theta), azimuthal uniform
        c_nodes, c_weights = np.polynomial.legendre.leggauss(quad_order)
        c = 0.5 * (c_nodes + 1.0)  # cos(theta) in [0, 1]
        cw = 0.5 * c_weights
        phi = (np.arange(2 * quad_order) + 0.5) * (np.pi / quad_order)
        st = np.sqrt(1.0 - c ** 2)
        local = np.stack(
            [
                np.outer(st, np.cos(phi)),
                np.outer(st, np.sin(phi)),
                np.repeat(c[:, None], phi.size, axis=1),
            ],
            axis=-1,
        )
        xi = local @ R.T
        vals = g(xi) * c[:, None]
        return float(np.sum(vals @ np.full(phi.size, np.pi / quad_order) * cw))
    raise ValueError("hemisphere moment implemented for d = 2 and d = 3 only")

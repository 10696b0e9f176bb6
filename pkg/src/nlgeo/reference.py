"""Independent quadrature references for discs, spheres and their flows.

Everything here reduces the defining integrals to one-dimensional adaptive
quadrature in polar coordinates; no grids, tables, or convolutions are
involved, so these values are fair cross-checks for the discrete paths.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad, solve_ivp

from .kernels import Anisotropy, Isotropic, KernelParams, sigma_scale


def _radial_tail_2d(T: float, p: KernelParams) -> float:
    """Integral of k(rho) * rho over (T, infinity) in the plane."""
    s, r = p.s, p.r
    if T >= r:
        return T ** (-s) / s
    return (r * r - T * T) / (2.0 * r ** (2 + s)) + r ** (-s) / s


def _radial_tail_3d(T: float, p: KernelParams) -> float:
    """Integral of k(rho) * rho^2 over (T, infinity) in space."""
    s, r = p.s, p.r
    if T >= r:
        return T ** (-s) / s
    return (r ** 3 - T ** 3) / (3.0 * r ** (3 + s)) + r ** (-s) / s


def _asin_minus_sincos(c: float) -> float:
    """asin(c) - c*sqrt(1-c^2), series-stable for small c."""
    if c < 1e-4:
        return (2.0 / 3.0) * c ** 3 + 0.2 * c ** 5
    return math.asin(c) - c * math.sqrt(1.0 - c * c)


def ball_curvature_quadrature(
    p: KernelParams, R: float, g: Anisotropy = Isotropic(), angle: float = 0.0
) -> float:
    """Nonlocal curvature of a ball of radius R at a boundary point.

    Splits the chord integral into the core-plateau wedge (closed form up to a
    short smooth quadrature) and the outer wedge integrated in logarithmic
    angle, so the value stays accurate for arbitrarily small core radii.
    d = 2 supports any anisotropy (evaluated along the chord direction);
    d = 3 is isotropic only.  The boundary point sits at polar angle ``angle``.
    """
    s, r = p.s, p.r
    c = min(1.0, r / (2 * R))
    if p.d == 2:
        u_star = math.asin(c)

        def gfac(phi_arr, side):
            # chord direction for angle theta = side*(pi/2 - phi) from the inward normal
            th = side * (math.pi / 2 - phi_arr)
            d0 = angle + math.pi + th
            return g(np.stack([np.cos(d0), np.sin(d0)], axis=-1))

        # outer wedges: |theta| < theta*, i.e. phi = pi/2 - |theta| in (u*, pi/2)
        def outer(side):
            def f(v):
                phi = np.exp(v)
                val = (2 * R * np.sin(phi)) ** (-s) / s * phi
                if not g.is_isotropic:
                    val = val * gfac(phi, side)
                return val

            v, _ = quad(
                f, math.log(max(u_star, 1e-300)), math.log(math.pi / 2),
                limit=400, epsabs=1e-13, epsrel=1e-12,
            )
            return v

        K = 2.0 * (outer(+1) + outer(-1))
        # plateau wedges: phi in (0, u*), chord 2R sin(phi) <= r
        if g.is_isotropic:
            int_sin2 = 0.5 * _asin_minus_sincos(c)
            plateau = (
                (r * r * u_star - 4 * R * R * int_sin2) / (2 * r ** (2 + s))
                + u_star * r ** (-s) / s
            )
            K += 4.0 * plateau
        else:
            for side in (+1, -1):
                f = lambda phi: (
                    (r * r - (2 * R * np.sin(phi)) ** 2) / (2 * r ** (2 + s))
                    + r ** (-s) / s
                ) * gfac(np.asarray(phi), side)
                v, _ = quad(f, 0.0, u_star, limit=200, epsabs=1e-13, epsrel=1e-12)
                K += 2.0 * v
        return float(K)
    if p.d == 3:
        if not g.is_isotropic:
            raise ValueError("spatial reference curvature is isotropic only")
        # outer: chord integral in w = cos(phi) is elementary
        if s == 1.0:
            outer = (2 * R) ** (-1) * math.log(1.0 / c)
        else:
            outer = (2 * R) ** (-s) * (c ** (1 - s) - 1.0) / (s - 1.0)
        outer /= s
        plateau = (r ** 3 * c - 2 * R ** 3 * c ** 4) / (3 * r ** (3 + s)) + c * r ** (-s) / s
        return 4.0 * math.pi * (outer + plateau)
    raise ValueError("reference curvature implemented for d = 2, 3")


def disc_overlap_area(t, R: float):
    """Area of the intersection of two discs of radius R at center distance t."""
    t = np.minimum(np.asarray(t, dtype=float), 2 * R)
    return 2 * R * R * np.arccos(np.clip(t / (2 * R), -1, 1)) - 0.5 * t * np.sqrt(
        np.maximum(4 * R * R - t * t, 0.0)
    )


def disc_energy_quadrature(
    p: KernelParams, R: float, g: Anisotropy = Isotropic(), r_max: float = math.inf
) -> float:
    """Interaction energy of a disc against its complement, pair distance <= r_max.

    Uses the translation identity: the energy equals the radial integral of
    k(t) * t * (area - overlap(t)) times the angular mass of g, because the
    disc's displaced self-overlap depends only on |t|.
    """
    if p.d != 2:
        raise ValueError("disc energy reference is planar")
    area = math.pi * R * R
    ang = g.sphere_integral(2) / (2 * math.pi)

    def f(t):
        k = p.r ** (-(2 + p.s)) if t <= p.r else t ** (-(2 + p.s))
        return t * k * (area - disc_overlap_area(t, R))

    pts = sorted({p.r, 2 * R, min(r_max, 2 * R)})
    out = 0.0
    lo = 0.0
    for b in pts:
        b = min(b, r_max)
        if b > lo:
            v, _ = quad(f, lo, b, limit=400, epsabs=1e-12, epsrel=1e-12)
            out += v
            lo = b
    if r_max > 2 * R:
        # beyond the diameter the overlap vanishes
        hi = r_max if math.isfinite(r_max) else math.inf
        v, _ = quad(lambda t: t ** (-(1 + p.s)) * area, 2 * R, hi, limit=200)
        out += v
    return 2 * math.pi * ang * out


def disc_flow_radius(
    p: KernelParams,
    R0: float,
    t_end: float,
    g: Anisotropy = Isotropic(),
    scaled: bool = True,
):
    """Radius trajectory of a disc shrinking under its own nonlocal curvature.

    By rotational symmetry (isotropic g, or any g after angular averaging of
    the normal velocity; exact only for isotropic) the disc stays a disc and
    the radius obeys dR/dt = -K(R)/sigma.  Returns (t_array, R_array) ending
    at extinction or t_end.
    """
    sig = sigma_scale(p) if scaled else 1.0

    def rhs(t, y):
        R = max(y[0], 1e-9)
        return [-ball_curvature_quadrature(p, R, g) / sig]

    def extinct(t, y):
        return y[0] - max(4 * p.r, 1e-6)

    extinct.terminal = True
    sol = solve_ivp(
        rhs, (0.0, t_end), [R0], rtol=1e-9, atol=1e-11, events=extinct, dense_output=True
    )
    return sol


def mcf_disc_radius(R0: float, d: int, t: float) -> float:
    """Limit mean-curvature-flow radius sqrt(R0^2 - 2 omega_{d-1} (d-1) t)."""
    from .kernels import unit_ball_volume

    w = unit_ball_volume(d - 1)
    val = R0 * R0 - 2.0 * w * (d - 1) * t
    return math.sqrt(val) if val > 0 else 0.0

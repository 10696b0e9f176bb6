"""Analytic test geometries, uniform grids, and rasterization.

Shapes carry exact membership, approximate signed distance (exact for balls,
boxes and half-spaces), closed-form areas/perimeters/curvatures where they
exist, and boundary sampling with outward normals.  Rasterization produces
per-cell occupancy fractions: cells crossing the boundary get either an exact
overlap area (discs and boxes in the plane) or a stratified supersample, so
downstream quadratures see smooth geometry rather than a binary mask.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

MAX_GRID_CELLS = 2 ** 28  # rasterization refuses grids larger than this


class UnsupportedShapeError(ValueError):
    """Requested closed form does not exist for this shape variant."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid: corner origin, spacing h, cell counts dims (x1 ... xd)."""

    origin: tuple
    h: float
    dims: tuple

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        if len(self.origin) != len(self.dims):
            raise ValueError("origin and dims must have matching dimension")
        if any(n <= 0 for n in self.dims):
            raise ValueError("dims must be positive")
        if int(np.prod(self.dims)) > MAX_GRID_CELLS:
            raise ValueError(f"grid exceeds the {MAX_GRID_CELLS}-cell memory cap")

    @property
    def d(self) -> int:
        return len(self.dims)

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.h

    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + self.h * np.asarray(self.dims)

    def cell_volume(self) -> float:
        return self.h ** self.d


@dataclass
class GridSet:
    """Grid plus per-cell occupancy fraction in [0, 1]."""

    spec: GridSpec
    frac: np.ndarray

    def __post_init__(self):
        self.frac = np.asarray(self.frac, dtype=float)
        if self.frac.shape != tuple(self.spec.dims):
            raise ValueError("fraction array shape must match grid dims")

    def measure(self) -> float:
        return float(self.frac.sum()) * self.spec.cell_volume()


@dataclass(frozen=True)
class BoundarySample:
    point: np.ndarray
    normal: np.ndarray


# ---------------------------------------------------------------------------
# shape variants


class Shape:
    d: int

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Membership for points of shape (..., d)."""
        raise NotImplementedError

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """Negative inside, positive outside; exact only where noted."""
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def bounding_radius(self, x) -> float:
        lo, hi = self.bounding_box()
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(self.d, -1).T
        return float(np.max(np.linalg.norm(corners - np.asarray(x), axis=1)))


class Ball(Shape):
    def __init__(self, center, radius: float):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.d = self.center.size

    def contains(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.linalg.norm(pts - self.center, axis=-1) <= self.radius

    def signed_distance(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.linalg.norm(pts - self.center, axis=-1) - self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def __repr__(self):
        return f"Ball({self.center.tolist()}, {self.radius})"


class Rectangle(Shape):
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if np.any(self.hi <= self.lo):
            raise ValueError("rectangle needs hi > lo on every axis")
        self.d = self.lo.size

    def contains(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=-1)

    def signed_distance(self, pts):
        pts = np.asarray(pts, dtype=float)
        q = np.maximum(self.lo - pts, pts - self.hi)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    def __repr__(self):
        return f"Rectangle({self.lo.tolist()}, {self.hi.tolist()})"


class Ellipse(Shape):
    """Axis-aligned planar ellipse with semi-axes (a, b)."""

    def __init__(self, center, semi_axes):
        self.center = np.asarray(center, dtype=float)
        self.axes = np.asarray(semi_axes, dtype=float)
        if self.center.size != 2 or self.axes.size != 2:
            raise ValueError("ellipse is planar: center and semi-axes in R^2")
        if np.any(self.axes <= 0):
            raise ValueError("semi-axes must be positive")
        self.d = 2

    def contains(self, pts):
        pts = np.asarray(pts, dtype=float)
        q = (pts - self.center) / self.axes
        return np.sum(q * q, axis=-1) <= 1.0

    def signed_distance(self, pts):
        # first-order estimate F/|grad F|; adequate for banding, not metric-exact
        pts = np.asarray(pts, dtype=float)
        rel = pts - self.center
        q = rel / self.axes
        F = np.sum(q * q, axis=-1) - 1.0
        grad = 2.0 * rel / self.axes ** 2
        gn = np.maximum(np.linalg.norm(grad, axis=-1), 1e-12)
        est = F / gn
        cap = float(np.min(self.axes))
        return np.clip(est, -cap, None)

    def bounding_box(self):
        return self.center - self.axes, self.center + self.axes

    def __repr__(self):
        return f"Ellipse({self.center.tolist()}, {self.axes.tolist()})"


class Annulus(Shape):
    def __init__(self, center, r_in: float, r_out: float):
        if not 0 < r_in < r_out:
            raise ValueError("annulus needs 0 < r_in < r_out")
        self.center = np.asarray(center, dtype=float)
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.d = self.center.size

    def contains(self, pts):
        rr = np.linalg.norm(np.asarray(pts, dtype=float) - self.center, axis=-1)
        return (rr >= self.r_in) & (rr <= self.r_out)

    def signed_distance(self, pts):
        rr = np.linalg.norm(np.asarray(pts, dtype=float) - self.center, axis=-1)
        return np.maximum(rr - self.r_out, self.r_in - rr)

    def bounding_box(self):
        return self.center - self.r_out, self.center + self.r_out

    def __repr__(self):
        return f"Annulus({self.center.tolist()}, {self.r_in}, {self.r_out})"


class HalfSpace(Shape):
    """Points y with normal . (y - point) <= 0; only meaningful clipped to a grid."""

    def __init__(self, point, normal):
        self.point = np.asarray(point, dtype=float)
        n = np.asarray(normal, dtype=float)
        nn = np.linalg.norm(n)
        if nn == 0:
            raise ValueError("normal must be nonzero")
        self.normal = n / nn
        self.d = self.point.size

    def contains(self, pts):
        pts = np.asarray(pts, dtype=float)
        return (pts - self.point) @ self.normal <= 0.0

    def signed_distance(self, pts):
        pts = np.asarray(pts, dtype=float)
        return (pts - self.point) @ self.normal

    def bounding_box(self):
        raise UnsupportedShapeError("half-space is unbounded")

    def __repr__(self):
        return f"HalfSpace({self.point.tolist()}, {self.normal.tolist()})"


class Union(Shape):
    def __init__(self, shapes):
        self.shapes = list(shapes)
        if not self.shapes:
            raise ValueError("union of nothing")
        self.d = self.shapes[0].d
        if any(s.d != self.d for s in self.shapes):
            raise ValueError("union members must share dimension")

    def contains(self, pts):
        out = self.shapes[0].contains(pts)
        for s in self.shapes[1:]:
            out = out | s.contains(pts)
        return out

    def signed_distance(self, pts):
        out = self.shapes[0].signed_distance(pts)
        for s in self.shapes[1:]:
            out = np.minimum(out, s.signed_distance(pts))
        return out

    def bounding_box(self):
        los, his = zip(*(s.bounding_box() for s in self.shapes))
        return np.min(los, axis=0), np.max(his, axis=0)

    def __repr__(self):
        return f"Union({self.shapes!r})"


class Difference(Shape):
    def __init__(self, a: Shape, b: Shape):
        if a.d != b.d:
            raise ValueError("difference members must share dimension")
        self.a = a
        self.b = b
        self.d = a.d

    def contains(self, pts):
        return self.a.contains(pts) & ~self.b.contains(pts)

    def signed_distance(self, pts):
        return np.maximum(self.a.signed_distance(pts), -self.b.signed_distance(pts))

    def bounding_box(self):
        return self.a.bounding_box()

    def __repr__(self):
        return f"Difference({self.a!r}, {self.b!r})"


class Translate(Shape):
    def __init__(self, shape: Shape, vector):
        self.shape = shape
        self.vector = np.asarray(vector, dtype=float)
        self.d = shape.d

    def contains(self, pts):
        return self.shape.contains(np.asarray(pts, dtype=float) - self.vector)

    def signed_distance(self, pts):
        return self.shape.signed_distance(np.asarray(pts, dtype=float) - self.vector)

    def bounding_box(self):
        lo, hi = self.shape.bounding_box()
        return lo + self.vector, hi + self.vector

    def __repr__(self):
        return f"Translate({self.shape!r}, {self.vector.tolist()})"


# ---------------------------------------------------------------------------
# closed forms


def exact_area(shape: Shape) -> float:
    """Lebesgue measure of the shape (closed-form variants only)."""
    if isinstance(shape, Ball):
        from .kernels import unit_ball_volume

        return unit_ball_volume(shape.d) * shape.radius ** shape.d
    if isinstance(shape, Rectangle):
        return float(np.prod(shape.hi - shape.lo))
    if isinstance(shape, Ellipse):
        return math.pi * shape.axes[0] * shape.axes[1]
    if isinstance(shape, Annulus):
        from .kernels import unit_ball_volume

        w = unit_ball_volume(shape.d)
        return w * (shape.r_out ** shape.d - shape.r_in ** shape.d)
    if isinstance(shape, Translate):
        return exact_area(shape.shape)
    if isinstance(shape, Union):
        if _pairwise_disjoint(shape.shapes):
            return sum(exact_area(s) for s in shape.shapes)
        raise UnsupportedShapeError("union area only for pairwise disjoint members")
    if isinstance(shape, Difference):
        lo_a, hi_a = shape.a.bounding_box()
        lo_b, hi_b = shape.b.bounding_box()
        if np.all(lo_b >= lo_a) and np.all(hi_b <= hi_a):
            return exact_area(shape.a) - exact_area(shape.b)
        raise UnsupportedShapeError("difference area only when the hole is enclosed")
    raise UnsupportedShapeError(f"no closed-form area for {shape!r}")


def _pairwise_disjoint(shapes) -> bool:
    boxes = [s.bounding_box() for s in shapes]
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            lo_i, hi_i = boxes[i]
            lo_j, hi_j = boxes[j]
            if np.all(hi_i >= lo_j) and np.all(hi_j >= lo_i):
                return False
    return True


def ellipse_arclength(a: float, b: float) -> float:
    """Ellipse circumference by adaptive quadrature of the speed."""
    f = lambda t: math.hypot(a * math.sin(t), b * math.cos(t))
    val, _ = quad(f, 0.0, math.pi / 2, limit=200, epsabs=1e-13, epsrel=1e-13)
    return 4.0 * val


def exact_perimeter(shape: Shape) -> float:
    """Boundary measure of the shape (closed-form variants only)."""
    if isinstance(shape, Ball):
        from .kernels import sphere_area

        return sphere_area(shape.d) * shape.radius ** (shape.d - 1)
    if isinstance(shape, Rectangle):
        side = shape.hi - shape.lo
        if shape.d == 2:
            return float(2.0 * side.sum())
        if shape.d == 3:
            return float(2.0 * (side[0] * side[1] + side[0] * side[2] + side[1] * side[2]))
        raise UnsupportedShapeError("rectangle perimeter only for d = 2, 3")
    if isinstance(shape, Ellipse):
        return ellipse_arclength(shape.axes[0], shape.axes[1])
    if isinstance(shape, Annulus):
        from .kernels import sphere_area

        w = sphere_area(shape.d)
        return w * (shape.r_out ** (shape.d - 1) + shape.r_in ** (shape.d - 1))
    if isinstance(shape, Translate):
        return exact_perimeter(shape.shape)
    if isinstance(shape, Union):
        if _pairwise_disjoint(shape.shapes):
            return sum(exact_perimeter(s) for s in shape.shapes)
        raise UnsupportedShapeError("union perimeter only for disjoint members")
    if isinstance(shape, Difference):
        lo_a, hi_a = shape.a.bounding_box()
        lo_b, hi_b = shape.b.bounding_box()
        if np.all(lo_b >= lo_a) and np.all(hi_b <= hi_a):
            return exact_perimeter(shape.a) + exact_perimeter(shape.b)
        raise UnsupportedShapeError("difference perimeter only when the hole is enclosed")
    raise UnsupportedShapeError(f"no closed-form perimeter for {shape!r}")


def boundary_parametrization(shape: Shape):
    """Return gamma(t), outward normal(t), speed(t) on [0, 2*pi) for planar shapes."""
    if isinstance(shape, Translate):
        g, n, sp = boundary_parametrization(shape.shape)
        return (lambda t: g(t) + shape.vector), n, sp
    if isinstance(shape, Ball) and shape.d == 2:
        c, R = shape.center, shape.radius

        def gamma(t):
            t = np.asarray(t, dtype=float)
            return c + R * np.stack([np.cos(t), np.sin(t)], axis=-1)

        def normal(t):
            t = np.asarray(t, dtype=float)
            return np.stack([np.cos(t), np.sin(t)], axis=-1)

        def speed(t):
            return np.full(np.shape(t), R, dtype=float)

        return gamma, normal, speed
    if isinstance(shape, Ellipse):
        c, (a, b) = shape.center, shape.axes

        def gamma(t):
            t = np.asarray(t, dtype=float)
            return c + np.stack([a * np.cos(t), b * np.sin(t)], axis=-1)

        def normal(t):
            t = np.asarray(t, dtype=float)
            n = np.stack([b * np.cos(t), a * np.sin(t)], axis=-1)
            return n / np.linalg.norm(n, axis=-1, keepdims=True)

        def speed(t):
            t = np.asarray(t, dtype=float)
            return np.hypot(a * np.sin(t), b * np.cos(t))

        return gamma, normal, speed
    raise UnsupportedShapeError(f"no boundary parametrization for {shape!r}")


def boundary_samples(shape: Shape, n: int):
    """n boundary points with exact outward unit normals."""
    if isinstance(shape, Translate):
        samples = boundary_samples(shape.shape, n)
        return [BoundarySample(s.point + shape.vector, s.normal) for s in samples]
    if isinstance(shape, HalfSpace):
        # lattice of points on the boundary plane inside a unit window
        nrm = shape.normal
        basis = _plane_basis(nrm)
        ts = np.linspace(-1.0, 1.0, n)
        pts = shape.point + np.outer(ts, basis[0])
        return [BoundarySample(p, nrm.copy()) for p in pts]
    if isinstance(shape, Ball) and shape.d == 3:
        # Fibonacci sphere
        i = np.arange(n) + 0.5
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        z = 1.0 - 2.0 * i / n
        rho = np.sqrt(1.0 - z ** 2)
        dirs = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
        return [
            BoundarySample(shape.center + shape.radius * u, u) for u in dirs
        ]
    if isinstance(shape, Annulus) and shape.d == 2:
        half = n // 2
        out = boundary_samples(Ball(shape.center, shape.r_out), max(half, 1))
        inner = boundary_samples(Ball(shape.center, shape.r_in), max(n - half, 1))
        flipped = [BoundarySample(s.point, -s.normal) for s in inner]
        return out + flipped
    gamma, normal, _ = boundary_parametrization(shape)
    ts = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    return [BoundarySample(gamma(t), normal(t)) for t in ts]


def classical_mean_curvature(shape: Shape, x) -> float:
    """Sum of principal curvatures at a boundary point; positive for a ball."""
    x = np.asarray(x, dtype=float)
    if isinstance(shape, Translate):
        return classical_mean_curvature(shape.shape, x - shape.vector)
    if isinstance(shape, Ball):
        return (shape.d - 1) / shape.radius
    if isinstance(shape, HalfSpace):
        return 0.0
    if isinstance(shape, Annulus):
        rr = np.linalg.norm(x - shape.center)
        if abs(rr - shape.r_out) <= abs(rr - shape.r_in):
            return (shape.d - 1) / shape.r_out
        return -(shape.d - 1) / shape.r_in
    if isinstance(shape, Ellipse):
        a, b = shape.axes
        rel = x - shape.center
        t = math.atan2(rel[1] / b, rel[0] / a)
        return a * b / (a ** 2 * math.sin(t) ** 2 + b ** 2 * math.cos(t) ** 2) ** 1.5
    if isinstance(shape, Rectangle):
        tol = 1e-9 * float(np.max(shape.hi - shape.lo))
        on_lo = np.abs(x - shape.lo) <= tol
        on_hi = np.abs(x - shape.hi) <= tol
        if int(on_lo.sum() + on_hi.sum()) >= 2:
            raise UnsupportedShapeError("curvature undefined at a rectangle corner")
        return 0.0
    raise UnsupportedShapeError(f"no classical curvature for {shape!r}")


def _plane_basis(normal: np.ndarray) -> np.ndarray:
    d = normal.size
    basis = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        v = e - (e @ normal) * normal
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v = v / nv
            for b in basis:
                v = v - (v @ b) * b
                nv = np.linalg.norm(v)
                if nv <= 1e-8:
                    break
                v = v / nv
            else:
                basis.append(v)
        if len(basis) == d - 1:
            break
    return np.array(basis)


# ---------------------------------------------------------------------------
# exact cell overlaps (planar)


def _disc_cdf(X, Y, R):
    """Area of {u^2+v^2 <= R^2, u <= X, v <= Y} for arrays X, Y."""
    X = np.clip(X, -R, R)
    gY = np.sqrt(np.maximum(R * R - np.minimum(np.abs(Y), R) ** 2, 0.0))

    def F(u):
        u = np.clip(u, -R, R)
        return 0.5 * (u * np.sqrt(np.maximum(R * R - u * u, 0.0)) + R * R * np.arcsin(np.clip(u / R, -1, 1)))

    # integral of f over [-R, X]
    int_f = F(X) - F(-R)
    # integral of clip(Y, -f, f): split at +-gY
    s1_hi = np.minimum(X, -gY)
    seg1 = F(s1_hi) - F(-R)  # |u| >= gY on the left
    s2_lo = np.maximum(-gY, -R)
    s2_hi = np.clip(X, s2_lo, gY)
    seg2_len = np.maximum(s2_hi - s2_lo, 0.0)
    s3_lo = gY
    seg3 = np.where(X > gY, F(X) - F(s3_lo), 0.0)
    sgn = np.sign(Y)
    int_clip = sgn * (seg1 + seg3) + np.clip(Y, -R, R) * seg2_len
    return int_f + int_clip


def halfplane_box_area(nx, ny, c, hx, hy):
    """Area of {n . y <= c} inside the box [0,hx]x[0,hy] (vectorized).

    Integrates the clipped width along the axis with the smaller normal
    component, which stays accurate for near-axis cuts where corner-based
    formulas cancel catastrophically.
    """
    nx, ny, c, hx, hy = np.broadcast_arrays(
        np.asarray(nx, float), np.asarray(ny, float), np.asarray(c, float),
        np.asarray(hx, float), np.asarray(hy, float),
    )
    # orient so the dominant normal component is +x
    swap = np.abs(ny) > np.abs(nx)
    ax = np.where(swap, ny, nx)
    ay = np.where(swap, nx, ny)
    wx = np.where(swap, hy, hx)
    wy = np.where(swap, hx, hy)
    cc = np.where(ax < 0, c - ax * wx, c)
    ax = np.maximum(np.abs(ax), 1e-300)
    # clipped width of the inside region as a function of the transverse axis
    u0 = cc / ax
    du = -(ay / ax) * wy  # exact increment, no cancellation
    u1 = u0 + du
    lo = np.minimum(u0, u1)
    hi = np.maximum(u0, u1)
    # mean of clip(u, 0, wx) over [lo, hi]; the quadratic piece averages to the
    # midpoint exactly, which is what keeps tiny cuts at full precision
    interior = (lo >= 0.0) & (hi <= wx)
    below = hi <= 0.0
    above = lo >= wx
    mixed = ~(interior | below | above)
    avg = np.clip(u0 + 0.5 * du, 0.0, wx)
    avg = np.where(below, 0.0, avg)
    avg = np.where(above, wx, avg)
    if np.any(mixed):
        a2 = np.clip(lo, 0.0, wx)
        b2 = np.clip(hi, 0.0, wx)
        quad_part = 0.5 * (b2 - a2) * (b2 + a2)
        lin_part = wx * np.maximum(hi - np.maximum(lo, wx), 0.0)
        width = np.maximum(hi - lo, 1e-300)
        avg = np.where(mixed, (quad_part + lin_part) / width, avg)
    return wy * avg


def disc_box_overlap(center, R, x0, y0, x1, y1):
    """Exact area of a disc intersected with axis-aligned boxes (vectorized).

    Boxes much smaller than the disc switch to a locally straight cut: the
    global-antiderivative route loses everything below machine epsilon of
    R^2 there, while the boundary is flat to O(box^2 / R) across the box.
    """
    cx, cy = center
    x0, y0, x1, y1 = np.broadcast_arrays(
        np.asarray(x0, float), np.asarray(y0, float), np.asarray(x1, float), np.asarray(y1, float)
    )
    diag = np.hypot(x1 - x0, y1 - y0)
    tiny = diag < 1e-5 * R
    out = np.empty(x0.shape)
    if np.any(~tiny):
        sel = ~tiny
        a = _disc_cdf(x1[sel] - cx, y1[sel] - cy, R)
        b = _disc_cdf(x0[sel] - cx, y1[sel] - cy, R)
        c = _disc_cdf(x1[sel] - cx, y0[sel] - cy, R)
        d = _disc_cdf(x0[sel] - cx, y0[sel] - cy, R)
        out[sel] = np.maximum(a - b - c + d, 0.0)
    if np.any(tiny):
        sel = tiny
        mx = 0.5 * (x0[sel] + x1[sel]) - cx
        my = 0.5 * (y0[sel] + y1[sel]) - cy
        rr = np.hypot(mx, my)
        sd = rr - R  # negative inside, exact to machine epsilon in absolute terms
        nx = mx / np.maximum(rr, 1e-300)
        ny = my / np.maximum(rr, 1e-300)
        hx = x1[sel] - x0[sel]
        hy = y1[sel] - y0[sel]
        # inward condition n . (y - corner) <= n . (mid - corner) - sd
        c_off = nx * 0.5 * hx + ny * 0.5 * hy - sd
        out[sel] = halfplane_box_area(nx, ny, c_off, hx, hy)
    return out if out.ndim else float(out)


def _exact_cell_fraction(shape: Shape, lo_x, lo_y, h):
    """Exact occupancy for planar discs/boxes; None when no closed form."""
    if isinstance(shape, Translate):
        inner = _exact_cell_fraction(shape.shape, lo_x - shape.vector[0], lo_y - shape.vector[1], h)
        return inner
    if isinstance(shape, Ball) and shape.d == 2:
        areas = disc_box_overlap(shape.center, shape.radius, lo_x, lo_y, lo_x + h, lo_y + h)
        return areas / (h * h)
    if isinstance(shape, Rectangle) and shape.d == 2:
        wx = np.clip(np.minimum(shape.hi[0], lo_x + h) - np.maximum(shape.lo[0], lo_x), 0.0, h)
        wy = np.clip(np.minimum(shape.hi[1], lo_y + h) - np.maximum(shape.lo[1], lo_y), 0.0, h)
        return wx * wy / (h * h)
    if isinstance(shape, Annulus) and shape.d == 2:
        outer = disc_box_overlap(shape.center, shape.r_out, lo_x, lo_y, lo_x + h, lo_y + h)
        inner = disc_box_overlap(shape.center, shape.r_in, lo_x, lo_y, lo_x + h, lo_y + h)
        return (outer - inner) / (h * h)
    return None


# ---------------------------------------------------------------------------
# rasterization


def _stratified_offsets(d: int, ss: int, h: float) -> np.ndarray:
    axes = [(np.arange(ss) + 0.5) * (h / ss)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def rasterize_patch(shape: Shape, origin, h: float, lo_idx, patch_dims, supersample: int = 4) -> np.ndarray:
    """Occupancy fractions for a rectangular cell window of a virtual grid.

    Cells whose center is farther than a cell diagonal from the boundary are
    decided by a single membership test; crossing cells get the exact overlap
    when available, otherwise a supersample^d stratified membership average.
    The window may extend beyond any materialized grid.
    """
    d = len(origin)
    lo_idx = tuple(int(i) for i in lo_idx)
    patch_dims = tuple(int(n) for n in patch_dims)
    axes = [origin[k] + (lo_idx[k] + np.arange(patch_dims[k]) + 0.5) * h for k in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=-1)

    sd = shape.signed_distance(centers)
    margin = 0.5 * h * math.sqrt(d) * 1.0001
    frac = np.where(sd <= 0.0, 1.0, 0.0)
    cross = np.abs(sd) <= margin
    if np.any(cross):
        idx = np.nonzero(cross)[0]
        cpts = centers[idx]
        if d == 2:
            exact = _exact_cell_fraction(shape, cpts[:, 0] - h / 2, cpts[:, 1] - h / 2, h)
        else:
            exact = None
        if exact is not None:
            frac[idx] = exact
        else:
            offs = _stratified_offsets(d, supersample, h)
            sub = cpts[:, None, :] - h / 2 + offs[None, :, :]
            inside = shape.contains(sub.reshape(-1, d)).reshape(len(idx), -1)
            frac[idx] = inside.mean(axis=1)
    return frac.reshape(patch_dims)


def rasterize(shape: Shape, grid: GridSpec, supersample: int = 4) -> GridSet:
    """Rasterize a shape to per-cell occupancy fractions on the full grid."""
    if supersample < 1:
        raise ValueError("supersample must be >= 1")
    if not isinstance(shape, HalfSpace):
        try:
            lo, hi = shape.bounding_box()
        except UnsupportedShapeError:
            lo = hi = None
        if lo is not None:
            g_lo = np.asarray(grid.origin)
            g_hi = grid.upper()
            for k in range(grid.d):
                if lo[k] < g_lo[k] - 1e-12:
                    raise ValueError(f"shape exceeds grid on the min side of axis {k}")
                if hi[k] > g_hi[k] + 1e-12:
                    raise ValueError(f"shape exceeds grid on the max side of axis {k}")
    frac = rasterize_patch(shape, grid.origin, grid.h, (0,) * grid.d, grid.dims, supersample)
    return GridSet(grid, frac)


def grid_for_shape(shape: Shape, h: float, pad: float = 0.0) -> GridSpec:
    """Smallest grid with spacing h covering the shape plus padding."""
    lo, hi = shape.bounding_box()
    lo = np.asarray(lo) - pad
    hi = np.asarray(hi) + pad
    dims = np.maximum(np.ceil((hi - lo) / h - 1e-9).astype(int), 1)
    return GridSpec(tuple(lo), h, tuple(dims))


# ---------------------------------------------------------------------------
# serialization: flat binary or CSV payload plus a JSON header


def save_gridset(gs: GridSet, path_prefix: str, fmt: str = "bin") -> list:
    """Write <prefix>.json plus <prefix>.bin or .csv; row-major x1 ... xd order."""
    header = {
        "origin": list(gs.spec.origin),
        "h": gs.spec.h,
        "dims": list(gs.spec.dims),
        "layout": "row-major x1..xd",
        "format": fmt,
    }
    paths = [f"{path_prefix}.json"]
    with open(paths[0], "w") as fh:
        json.dump(header, fh, indent=1)
    if fmt == "bin":
        path = f"{path_prefix}.bin"
        gs.frac.astype("<f8").tofile(path)
    elif fmt == "csv":
        path = f"{path_prefix}.csv"
        np.savetxt(path, gs.frac.reshape(gs.spec.dims[0], -1), delimiter=",", fmt="%.17g")
    else:
        raise ValueError("format must be 'bin' or 'csv'")
    paths.append(path)
    return paths


def load_gridset(path_prefix: str) -> GridSet:
    with open(f"{path_prefix}.json") as fh:
        header = json.load(fh)
    spec = GridSpec(tuple(header["origin"]), header["h"], tuple(header["dims"]))
    if header["format"] == "bin":
        frac = np.fromfile(f"{path_prefix}.bin", dtype="<f8").reshape(spec.dims)
    else:
        frac = np.loadtxt(f"{path_prefix}.csv", delimiter=",").reshape(spec.dims)
    return GridSet(spec, frac)

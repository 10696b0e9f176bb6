"""Slip-region anisotropy, its closed forms, and the preset experiments.

The planar elastic self-interaction of a slip region with unit slip direction
e1 reduces to the s = 1 kernel weighted by a quadratic angular density in the
shear modulus and Poisson ratio.  This module provides that density, the
closed forms of its surface energy and limiting curvature, and a Lagrangian
front tracker used as an independent reference for the level-set flow: the
tracker computes the nonlocal curvature of the evolving polygon by a boundary
line integral of the divergence field, so it shares no machinery with the
grid solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .curvature import classical_aniso_curvature
from .flow import FlowConfig, Trajectory, run_flow, zero_contour
from .kernels import Anisotropy, Dislocation, KernelParams, field_T, sigma_scale
from .shapes import GridSpec, Shape


@dataclass(frozen=True)
class DislocationParams:
    mu: float
    poisson: float

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("shear modulus must be positive")
        if not -1.0 < self.poisson < 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 1/2)")


def as_anisotropy(dp: DislocationParams) -> Dislocation:
    return Dislocation(dp.mu, dp.poisson)


def dislocation_g(dp: DislocationParams, xi) -> float:
    """Angular density mu/(8 pi) [ (1+nu)/(1-nu) xi_1^2 + (1-2 nu)/(1-nu) xi_2^2 ]."""
    xi = np.asarray(xi, dtype=float)
    if abs(np.linalg.norm(xi) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    val = as_anisotropy(dp)(xi)
    return float(val)


def dislocation_phi_closed(dp: DislocationParams, nu) -> float:
    """Closed-form surface density mu/(12 pi) [A (1+n1^2) + B (1+n2^2)].

    A, B are the two quadratic coefficients of the angular density; matches
    the hemisphere first moment of the density by direct integration.
    """
    nu = np.asarray(nu, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    a = (1.0 + dp.poisson) / (1.0 - dp.poisson)
    b = (1.0 - 2.0 * dp.poisson) / (1.0 - dp.poisson)
    return dp.mu / (12.0 * math.pi) * (a * (1.0 + nu[0] ** 2) + b * (1.0 + nu[1] ** 2))


def dislocation_K1(dp: DislocationParams, shape: Shape, x) -> float:
    """Limiting anisotropic curvature with the slip-region density."""
    return classical_aniso_curvature(as_anisotropy(dp), shape, x)


# ---------------------------------------------------------------------------
# polygon curvature via the divergence-field boundary integral


def polygon_midpoint_curvature(poly: np.ndarray, p: KernelParams, g: Anisotropy, gl_order: int = 12, splits: int = 2):
    """Nonlocal curvature of a CCW polygon at every edge midpoint.

    Uses the identity K(x, E) = -2 * contour integral of g(dir) T(y - x) . n(y):
    the divergence of g T reproduces the anisotropic kernel, and excising the
    core singularity at x contributes exactly half the kernel mass, which
    cancels against the total-mass term.  Edges adjacent to x integrate to
    zero identically (T is radial there), so they are skipped.
    """
    n = len(poly)
    a = poly
    b = np.roll(poly, -1, axis=0)
    edges = b - a
    lens = np.linalg.norm(edges, axis=1)
    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=-1) / lens[:, None]
    mids = 0.5 * (a + b)

    nodes, weights = np.polynomial.legendre.leggauss(gl_order)
    ts = []
    ws = []
    for k in range(splits):
        lo = k / splits
        ts.append(lo + (nodes + 1.0) * 0.5 / splits)
        ws.append(weights * 0.5 / splits)
    ts = np.concatenate(ts)
    ws = np.concatenate(ws)

    ypts = a[:, None, :] + ts[None, :, None] * edges[:, None, :]  # (n, q, 2)
    K = np.empty(n)
    for i in range(n):
        rel = ypts - mids[i]  # (n, q, 2)
        T = field_T(p, rel.reshape(-1, 2)).reshape(rel.shape)
        if not g.is_isotropic:
            nrm = np.linalg.norm(rel, axis=-1, keepdims=True)
            T = T * g(rel / np.maximum(nrm, 1e-300))[..., None]
        dot = np.einsum("eqk,ek->eq", T, normals)
        contrib = (dot @ ws) * lens
        contrib[i] = 0.0  # own edge: T is parallel to it
        K[i] = -2.0 * float(contrib.sum())
    return K


def _resample_closed(poly: np.ndarray, n: int) -> np.ndarray:
    seg = np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    targets = np.linspace(0.0, total, n, endpoint=False)
    closed = np.vstack([poly, poly[:1]])
    out = np.empty((n, 2))
    out[:, 0] = np.interp(targets, cum, closed[:, 0])
    out[:, 1] = np.interp(targets, cum, closed[:, 1])
    return out


def _menger_curvature(poly: np.ndarray):
    prev = np.roll(poly, 1, axis=0)
    nxt = np.roll(poly, -1, axis=0)
    u = poly - prev
    v = nxt - poly
    w = nxt - prev
    cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    denom = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1) * np.linalg.norm(w, axis=1)
    return 2.0 * cross / np.maximum(denom, 1e-300)


def track_front(
    poly0: np.ndarray,
    p: KernelParams,
    g: Anisotropy,
    snapshot_times,
    velocity: str = "matched",
    cfl: float = 0.4,
    n_nodes: int | None = None,
):
    """Explicit Lagrangian evolution of a closed CCW front.

    ``velocity='matched'`` moves nodes with the finite-core nonlocal curvature
    (scaled by the leading normalization), evaluated by the boundary-integral
    rule; ``velocity='limit'`` uses the local limit law, a circumscribed-circle
    curvature weighted by the tangent density.  Nodes are redistributed to
    uniform arc length every step.  Returns {time: polygon}.
    """
    if n_nodes is None:
        n_nodes = len(poly0)
    poly = _resample_closed(np.asarray(poly0, dtype=float), n_nodes)
    sig = sigma_scale(p)
    t = 0.0
    remaining = sorted(snapshot_times)
    out = {}
    while remaining:
        target = remaining[0]
        if t >= target - 1e-12:
            out[target] = poly.copy()
            remaining.pop(0)
            continue
        if velocity == "matched":
            K_mid = polygon_midpoint_curvature(poly, p, g)
            K_node = 0.5 * (K_mid + np.roll(K_mid, 1))
            V = K_node / sig
        else:
            kappa = _menger_curvature(poly)
            tang = np.roll(poly, -1, axis=0) - np.roll(poly, 1, axis=0)
            tang = tang / np.linalg.norm(tang, axis=1, keepdims=True)
            if g.is_isotropic:
                V = 2.0 * kappa
            else:
                V = 2.0 * g(tang) * kappa
        nu = np.stack(
            [
                np.roll(poly, -1, axis=0)[:, 1] - np.roll(poly, 1, axis=0)[:, 1],
                np.roll(poly, 1, axis=0)[:, 0] - np.roll(poly, -1, axis=0)[:, 0],
            ],
            axis=-1,
        )
        nu = nu / np.linalg.norm(nu, axis=1, keepdims=True)
        edge_min = float(np.min(np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)))
        vmax = float(np.max(np.abs(V)))
        dt = cfl * edge_min / vmax if vmax > 0 else (target - t)
        dt = min(dt, target - t)
        poly = poly - dt * V[:, None] * nu
        poly = _resample_closed(poly, n_nodes)
        t += dt
    return out


def hausdorff_distance(A, B, spacing: float) -> float:
    """Symmetric Hausdorff distance between polyline collections."""

    def densify(lines):
        pts = []
        for ln in lines:
            ln = np.asarray(ln)
            closed = np.vstack([ln, ln[:1]]) if len(ln) > 2 else ln
            for a, b in zip(closed[:-1], closed[1:]):
                npts = max(2, int(np.linalg.norm(b - a) / spacing) + 1)
                ts = np.linspace(0.0, 1.0, npts, endpoint=False)
                pts.append(a + ts[:, None] * (b - a))
        return np.concatenate(pts)

    pa = densify(A if isinstance(A, list) else [A])
    pb = densify(B if isinstance(B, list) else [B])
    d_ab = cKDTree(pb).query(pa)[0].max()
    d_ba = cKDTree(pa).query(pb)[0].max()
    return float(max(d_ab, d_ba))


def dislocation_flow_preset(
    dp: DislocationParams,
    shape: Shape,
    r_list,
    h_rule=None,
    t_compare: float = 0.05,
    tracker_nodes: int = 192,
) -> dict:
    """Scaled slip-region flow for several core radii against the front tracker.

    For each r the level-set solver runs the normalization-scaled flow at
    s = 1, and the Lagrangian tracker evolves the same initial front with the
    matching finite-core velocity law.  Reports the Hausdorff distance between
    the zero contour and the tracker polygon at the comparison time.
    """
    h_rule = h_rule or (lambda r: r / 8.0)
    g = as_anisotropy(dp)
    lo, hi = shape.bounding_box()
    runs = []
    for r in sorted(r_list, reverse=True):
        p = KernelParams(2, 1.0, r)
        h = h_rule(r)
        band = 8.0 * max(r, 4.0 * h)
        pad = band + 8 * h
        grid = GridSpec(
            tuple(np.asarray(lo) - pad),
            h,
            tuple(int(math.ceil((hi[k] - lo[k] + 2 * pad) / h)) for k in range(2)),
        )
        cfg = FlowConfig(
            p=p, g=g, scaling="sigma", t_end=t_compare + 1e-9, snapshot_dt=t_compare
        )
        traj = run_flow(shape, grid, cfg)
        t_snap = traj.times[-1]
        contour = traj.contours[-1]
        from .shapes import boundary_samples, exact_perimeter

        # the polygon must resolve the kernel core, or its facets look flat
        # to the interaction and the tracked velocity comes out low
        n_nodes = max(tracker_nodes, int(math.ceil(exact_perimeter(shape) / (0.5 * r))))
        samples = boundary_samples(shape, n_nodes)
        poly0 = np.array([s.point for s in samples])
        if _polygon_area_signed(poly0) < 0:
            poly0 = poly0[::-1]
        tracked = track_front(poly0, p, g, [t_snap], velocity="matched")
        dist = hausdorff_distance(contour, [tracked[t_snap]], spacing=h / 4)
        runs.append(
            {
                "r": r,
                "h": h,
                "t": t_snap,
                "trajectory": traj,
                "tracker": tracked[t_snap],
                "hausdorff": dist,
            }
        )
    dists = [run["hausdorff"] for run in runs]
    return {
        "runs": runs,
        "hausdorff_decreasing": all(d1 <= d0 + 1e-12 for d0, d1 in zip(dists, dists[1:])),
    }


def _polygon_area_signed(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

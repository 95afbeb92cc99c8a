"""Discretization of data and velocity onto an admissible mesh.

The initial datum becomes per-cell averages via centroid-fan triangulation and
Gauss quadrature.  The velocity becomes per-face, per-slab averages of u . n
(time average over the slab, line average over the face).  Both follow the
definitions the stability and convergence statements are proved for, so the
monitors downstream can rely on exact antisymmetry and the no-flow boundary.
"""

from __future__ import annotations

import numpy as np

from .fields import CellField, FluxField, VelocityField

__all__ = [
    "discretize_initial_datum",
    "discretize_velocity",
    "discrete_divergence",
    "divergence_linf_profile",
    "compute_kmax",
    "kmax_constant_divergence",
]


def _gauss01(n):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    return 0.5 * (x + 1.0), 0.5 * w


def _triangle_rule(order):
    """Product Gauss rule on the unit triangle via the collapsed square.

    Maps (a, b) in [0,1]^2 to (a, (1-a) b) with Jacobian (1-a); `order` points
    per axis.  Converges spectrally for smooth integrands; order 3 is the
    default used for data discretization.
    """
    a, wa = _gauss01(order)
    b, wb = _gauss01(order)
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    x = A.ravel()
    y = ((1.0 - A) * B).ravel()
    w = (WA * WB * (1.0 - A)).ravel()
    return np.column_stack([x, y]), w


def discretize_initial_datum(f, mesh, quad_order=3):
    """Cell averages of ``f`` by centroid-fan triangulation + Gauss quadrature.

    Parameters
    ----------
    f : callable
        Vectorized ``f(X) -> (n,)`` for X of shape (n, 2).
    mesh : Mesh
        Needs vertex polygons (generated meshes).
    quad_order : int
        Points per axis of the collapsed product rule on each fan triangle.
    """
    if mesh.cell_polygons is None:
        raise ValueError("datum discretization needs cell polygons; "
                         "file meshes carry none")
    ref, wref = _triangle_rule(quad_order)
    # assemble all quadrature points across all fan triangles in one batch
    pts_all, w_all, owner = [], [], []
    for i, poly in enumerate(mesh.cell_polygons):
        c = mesh.cell_centroids[i]
        nv = len(poly)
        for a in range(nv):
            p0, p1 = poly[a], poly[(a + 1) % nv]
            e1 = p1 - p0
            e2 = c - p0
            det = e1[0] * e2[1] - e1[1] * e2[0]  # 2 * signed area
            pts = p0 + np.outer(ref[:, 0], e1) + np.outer(ref[:, 1], e2)
            pts_all.append(pts)
            w_all.append(wref * det)
            owner.append(np.full(len(wref), i))
    P = np.vstack(pts_all)
    W = np.concatenate(w_all)
    O = np.concatenate(owner)
    vals = np.asarray(f(P), dtype=float)
    if vals.shape != (len(P),):
        raise ValueError("datum callback must return one value per point")
    integ = np.zeros(mesh.n_cells)
    np.add.at(integ, O, W * vals)
    return CellField(mesh, integ / mesh.cell_volumes)


def discretize_velocity(u, mesh, k, T, quad_face=3, quad_time=2):
    """Face-and-slab averages u_KL^n of ``u . n_KL``.

    ``T / k`` must be an integer within 1e-12 relative tolerance; otherwise the
    request is rejected (choose N and set k = T / N).  Steady fields are
    detected via ``u.time_dependent`` and stored as a single slab.
    """
    if not isinstance(u, VelocityField):
        raise TypeError("u must be a VelocityField")
    k = float(k)
    T = float(T)
    if k <= 0 or T <= 0:
        raise ValueError("k and T must be positive")
    ratio = T / k
    n_steps = int(round(ratio))
    if n_steps < 1 or abs(ratio - n_steps) > 1e-12 * max(1.0, ratio):
        raise ValueError(
            f"T/k = {ratio} is not an integer; choose N and set k = T/N")
    if mesh.face_points is None:
        raise ValueError("velocity discretization needs face endpoints; "
                         "file meshes carry none")

    sq, sw = _gauss01(quad_face)       # points along each face segment
    tq, tw = _gauss01(quad_time)       # points inside each time slab

    p0 = mesh.face_points[:, 0, :]
    p1 = mesh.face_points[:, 1, :]
    m = mesh.n_faces
    # (m * quad_face, 2) face quadrature points, face-major
    pts = (p0[:, None, :] + sq[None, :, None] * (p1 - p0)[:, None, :])
    pts = pts.reshape(m * len(sq), 2)
    normals = mesh.face_normals
    interior = mesh.interior

    def slab_average(n):
        acc = np.zeros(m)
        t0 = n * k
        for tj, twj in zip(tq, tw):
            uv = u(t0 + tj * k, pts).reshape(m, len(sq), 2)
            un = uv[:, :, 0] * normals[:, None, 0] + uv[:, :, 1] * normals[:, None, 1]
            acc += twj * (un @ sw)
        acc[~interior] = 0.0  # no-flow boundary
        return acc

    if u.time_dependent:
        values = np.empty((n_steps, m))
        for n in range(n_steps):
            values[n] = slab_average(n)
        steady = False
    else:
        values = slab_average(0)[None, :]
        steady = True
    return FluxField(mesh, values, k=k, T=T, n_steps=n_steps, steady=steady)


def discrete_divergence(flux, mesh, n=0):
    """Per-cell discrete divergence (div u)_K^n = sum_L (|K|L|/|K|) u_KL^n."""
    vals = flux.slab(n)
    div = np.zeros(mesh.n_cells)
    inter = mesh.interior
    au = mesh.face_areas[inter] * vals[inter]
    np.add.at(div, mesh.face_cells[inter, 0], au)
    np.add.at(div, mesh.face_cells[inter, 1], -au)  # u_LK = -u_KL
    return div / mesh.cell_volumes


def divergence_linf_profile(u, times, domain=None, nx=64, ny=64):
    """sup_x (div u(t, x))^- evaluated on a sample grid, per time.

    Uses the declared divergence callback when available; otherwise central
    finite differences of the velocity on the same grid (documented fallback).
    """
    if domain is None:
        domain = u.domain
    if domain is None:
        from .mesh import Domain
        domain = Domain()
    xs = domain.x0 + (np.arange(nx) + 0.5) * domain.width / nx
    ys = domain.y0 + (np.arange(ny) + 0.5) * domain.height / ny
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    prof = np.empty(len(times))
    for i, t in enumerate(times):
        d = u.divergence(t, pts)
        prof[i] = max(0.0, float(-d.min()))
    return prof


def compute_kmax(u, q, alpha, T, domain=None, n_samples=2048, nx=64, ny=64):
    """Largest admissible time step for the L^q stability estimate.

    Finds the largest k such that every window I of length <= k satisfies
    ((q-1)/q) * integral_I sup_x (div u)^- dt <= (alpha-1)/alpha, capped at T.
    The divergence profile is sampled on `n_samples` intervals and the window
    scan refined by bisection on the piecewise-linear cumulative integral, so
    the result is exact up to that sampling resolution.
    """
    q = float(q)
    alpha = float(alpha)
    if q <= 1 or alpha <= 1:
        raise ValueError("q and alpha must exceed 1")
    T = float(T)
    budget = (alpha - 1.0) / alpha * q / (q - 1.0)

    times = np.linspace(0.0, T, n_samples + 1)
    g = divergence_linf_profile(u, times, domain=domain, nx=nx, ny=ny)
    # piecewise-linear cumulative integral of g
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(times))])

    def max_window(kk):
        """max over t of cum(t + kk) - cum(t), linear interpolation."""
        if kk >= T:
            return cum[-1]
        starts = times[times <= T - kk]
        hi = np.interp(starts + kk, times, cum)
        lo = np.interp(starts, times, cum)
        # also check windows ending exactly at sample points
        ends = times[times >= kk]
        hi2 = np.interp(ends, times, cum)
        lo2 = np.interp(ends - kk, times, cum)
        return max(float((hi - lo).max()), float((hi2 - lo2).max()))

    if max_window(T) <= budget:
        return T
    lo, hi = 0.0, T
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if max_window(mid) <= budget:
            lo = mid
        else:
            hi = mid
    return lo


def kmax_constant_divergence(c, q, alpha, T):
    """Closed form when sup_x (div u)^- is the constant c >= 0."""
    q = float(q)
    alpha = float(alpha)
    if q <= 1 or alpha <= 1:
        raise ValueError("q and alpha must exceed 1")
    if c <= 0:
        return float(T)
    return float(min(T, q * (alpha - 1.0) / ((q - 1.0) * alpha * c)))

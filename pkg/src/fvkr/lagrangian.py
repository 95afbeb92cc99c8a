"""Reflected Euler-Maruyama particle simulator.

A Monte Carlo oracle for the advection-diffusion solve: particles follow
dX = u(t, X) dt + sqrt(2 kappa) dB with specular (mirror) reflection at the
walls of the rectangular domain, and their histogram estimates the density.
Mirror reflection is the standard weak-order-1/2 discretization of the
normally reflected SDE; the accumulated boundary local time is tracked as a
diagnostic (it must stay nondecreasing and below elapsed time) but is never
fed back into the position update.

Corner note: reflection at polygon corners is resolved by iterating the
edge-wise mirror map (capped); the continuum construction assumes smooth
boundaries, so corner behavior here is a discretization choice.

Randomness is counter-based (Philox) keyed by (seed, step); each particle
reads a fixed offset of the counter stream, so trajectories are bitwise
reproducible regardless of chunking or scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ParticleEnsemble",
    "StepFailure",
    "em_step",
    "simulate",
    "histogram",
]


class StepFailure(RuntimeError):
    """A particle could not be brought back into the domain."""


def _stream(seed, step):
    """Deterministic generator for one (seed, step) pair."""
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, step], dtype=np.uint64)))


@dataclass
class ParticleEnsemble:
    """Positions plus per-particle accumulated boundary local time."""

    positions: np.ndarray
    local_time: np.ndarray
    domain: object
    kappa: float
    seed: int
    time: float = 0.0
    step_index: int = 0
    snapshots: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, float))
        self.local_time = np.asarray(self.local_time, float)
        d = self.domain
        x, y = self.positions[:, 0], self.positions[:, 1]
        if (x.min(initial=d.x0) < d.x0 or x.max(initial=d.x0) > d.x1
                or y.min(initial=d.y0) < d.y0 or y.max(initial=d.y0) > d.y1):
            raise ValueError("particle outside the closed domain")
        if self.local_time.min(initial=0.0) < 0:
            raise ValueError("negative local time")

    @property
    def n_particles(self):
        return len(self.positions)


def _reflect(pos, domain, max_iter=8):
    """Mirror positions back into the rectangle.

    Returns the reflected positions and the per-particle total normal
    penetration depth (summed over reflection iterations, both axes).
    """
    x = pos[:, 0].copy()
    y = pos[:, 1].copy()
    depth = np.zeros(len(x))
    for _ in range(max_iter):
        out = ((x < domain.x0) | (x > domain.x1)
               | (y < domain.y0) | (y > domain.y1))
        if not out.any():
            break
        lo = x < domain.x0
        depth[lo] += domain.x0 - x[lo]
        x[lo] = 2 * domain.x0 - x[lo]
        hi = x > domain.x1
        depth[hi] += x[hi] - domain.x1
        x[hi] = 2 * domain.x1 - x[hi]
        lo = y < domain.y0
        depth[lo] += domain.y0 - y[lo]
        y[lo] = 2 * domain.y0 - y[lo]
        hi = y > domain.y1
        depth[hi] += y[hi] - domain.y1
        y[hi] = 2 * domain.y1 - y[hi]
    else:
        still = ((x < domain.x0) | (x > domain.x1)
                 | (y < domain.y0) | (y > domain.y1))
        if still.any():
            raise StepFailure(
                f"{int(still.sum())} particles still outside after "
                f"{max_iter} reflections; reduce dt")
    return np.column_stack([x, y]), depth


def em_step(ens, u, dt):
    """One Euler-Maruyama step with mirror reflection at the walls."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    drift = u(ens.time, ens.positions) * dt
    if ens.kappa > 0:
        rng = _stream(ens.seed, ens.step_index + 1)
        noise = np.sqrt(2 * ens.kappa * dt) * rng.standard_normal(
            ens.positions.shape)
    else:
        noise = 0.0
    proposed = ens.positions + drift + noise
    newpos, depth = _reflect(proposed, ens.domain)
    # diagnostic local-time increment: penetration depth on the diffusive
    # length scale, clipped to the step length
    speed = np.linalg.norm(drift, axis=1)
    scale = np.sqrt(2 * ens.kappa * dt + speed * dt)
    inc = np.zeros(len(depth))
    hit = depth > 0
    inc[hit] = np.minimum(depth[hit] / np.maximum(scale[hit], 1e-300), dt)
    return replace(ens, positions=newpos, local_time=ens.local_time + inc,
                   time=ens.time + dt, step_index=ens.step_index + 1)


def _sample_in_cells(mesh, cell_ids, rng):
    """Uniform placement inside each particle's assigned cell."""
    n = len(cell_ids)
    if mesh.structure and mesh.structure[0] == "cartesian":
        _, nx, ny = mesh.structure
        d = mesh.domain
        hx = d.width / nx
        hy = d.height / ny
        ix = cell_ids % nx
        iy = cell_ids // nx
        uv = rng.random((n, 2))
        return np.column_stack([d.x0 + (ix + uv[:, 0]) * hx,
                                d.y0 + (iy + uv[:, 1]) * hy])
    if mesh.cell_polygons is None:
        raise ValueError("particle sampling needs cell geometry")
    out = np.empty((n, 2))
    order = np.argsort(cell_ids, kind="stable")
    sorted_ids = cell_ids[order]
    bounds = np.searchsorted(sorted_ids, np.arange(mesh.n_cells + 1))
    for ci in range(mesh.n_cells):
        lo, hi = bounds[ci], bounds[ci + 1]
        if lo == hi:
            continue
        poly = mesh.cell_polygons[ci]
        c = mesh.cell_centroids[ci]
        nv = len(poly)
        p0 = np.asarray(poly)
        p1 = np.roll(p0, -1, axis=0)
        areas = 0.5 * np.abs((p1[:, 0] - p0[:, 0]) * (c[1] - p0[:, 1])
                             - (p1[:, 1] - p0[:, 1]) * (c[0] - p0[:, 0]))
        m = hi - lo
        tri = rng.choice(nv, size=m, p=areas / areas.sum())
        r1 = np.sqrt(rng.random(m))
        r2 = rng.random(m)
        # uniform in triangle (c, p0[tri], p1[tri])
        pts = (c * (1 - r1)[:, None]
               + p0[tri] * (r1 * (1 - r2))[:, None]
               + p1[tri] * (r1 * r2)[:, None])
        out[order[lo:hi]] = pts
    return out


def simulate(theta0, u, kappa, T, dt, n_particles, seed,
             snapshot_times=None):
    """Run the particle oracle from a nonnegative cell field.

    Initial positions: per-cell multinomial on the cell masses, then uniform
    placement within each cell.  Returns the final ensemble; requested
    snapshot times (matched to step boundaries) are stored on
    ``ensemble.snapshots``.
    """
    mesh = theta0.mesh
    vals = theta0.values
    if vals.min(initial=0.0) < 0:
        raise ValueError("particle sampling needs a nonnegative datum")
    if kappa < 0 or T <= 0 or dt <= 0:
        raise ValueError("kappa >= 0 and T, dt > 0 required")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-12 * max(T, 1.0):
        raise ValueError(f"T/dt = {T / dt} is not an integer")
    masses = vals * mesh.cell_volumes
    total = masses.sum()
    if total <= 0:
        raise ValueError("zero-mass datum")
    rng0 = _stream(seed, 0)
    counts = rng0.multinomial(n_particles, masses / total)
    cell_ids = np.repeat(np.arange(mesh.n_cells), counts)
    pos = _sample_in_cells(mesh, cell_ids, rng0)
    ens = ParticleEnsemble(pos, np.zeros(n_particles), mesh.domain,
                           float(kappa), int(seed))
    want = {}
    if snapshot_times is not None:
        for t in snapshot_times:
            n = int(round(t / dt))
            if abs(n * dt - t) > 1e-9 * max(T, 1.0) or not 0 <= n <= n_steps:
                raise ValueError(f"snapshot time {t} is not a step boundary")
            want[n] = float(t)
    if 0 in want:
        ens.snapshots[want[0]] = ens.positions.copy()
    for n in range(n_steps):
        ens = em_step(ens, u, dt)
        if ens.step_index in want:
            ens.snapshots[want[ens.step_index]] = ens.positions.copy()
    return ens


def histogram(ens, mesh, total_mass):
    """Cell-count density scaled so its integral equals ``total_mass``.

    Cells are located exactly on Cartesian meshes; otherwise nearest mesh
    point, which coincides with cell membership on Voronoi meshes.
    """
    if ens.n_particles == 0:
        raise ValueError("empty ensemble")
    if mesh.structure and mesh.structure[0] == "cartesian":
        ids = mesh.locate(ens.positions)
    else:
        from scipy.spatial import cKDTree
        _, ids = cKDTree(mesh.cell_points).query(ens.positions)
    counts = np.bincount(ids, minlength=mesh.n_cells).astype(float)
    cell_mass = counts * (total_mass / ens.n_particles)
    # absorb the summation roundoff so the discrete integral is exact
    cell_mass[np.argmax(cell_mass)] += total_mass - cell_mass.sum()
    from .fields import CellField
    return CellField(mesh, cell_mass / mesh.cell_volumes)

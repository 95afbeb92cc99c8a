"""Admissible 2-D finite-volume meshes.

A mesh is *admissible* when every cell is a convex polygon, each cell carries a
point x_K in its closure (off the domain boundary), and for every interior face
the segment x_K -> x_L is orthogonal to the face.  Cartesian tensor meshes and
clipped Voronoi tessellations both satisfy this by construction; the validator
re-checks each clause numerically and reports per-clause results instead of
throwing.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Domain",
    "Mesh",
    "Cell",
    "Face",
    "QualityReport",
    "build_cartesian_mesh",
    "build_voronoi_mesh",
    "validate_admissibility",
    "mesh_size",
    "write_mesh",
    "read_mesh",
]

MESH_FORMAT_HEADER = "fvkr-mesh v1 d=2"

# Default tolerances for the admissibility validator.
TOL_ORTH = 1e-9
TOL_VOL = 1e-10


class InvalidMeshArgument(ValueError):
    """Raised for structurally invalid generator input (not for bad meshes)."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned rectangular domain [x0, x1] x [y0, y1]."""

    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise InvalidMeshArgument("domain must have positive extent")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    def contains(self, pts, tol=0.0):
        pts = np.asarray(pts, dtype=float)
        return (
            (pts[..., 0] >= self.x0 - tol)
            & (pts[..., 0] <= self.x1 + tol)
            & (pts[..., 1] >= self.y0 - tol)
            & (pts[..., 1] <= self.y1 + tol)
        )

    def on_boundary(self, pts, tol=1e-12):
        pts = np.asarray(pts, dtype=float)
        near = (
            (np.abs(pts[..., 0] - self.x0) <= tol)
            | (np.abs(pts[..., 0] - self.x1) <= tol)
            | (np.abs(pts[..., 1] - self.y0) <= tol)
            | (np.abs(pts[..., 1] - self.y1) <= tol)
        )
        return near & self.contains(pts, tol=tol)


@dataclass(frozen=True)
class Cell:
    """Read-only view of one cell."""

    index: int
    point: np.ndarray       # x_K, the orthogonality point
    volume: float
    polygon: np.ndarray | None  # ccw vertex loop, None for file-loaded meshes

    @property
    def centroid(self):
        if self.polygon is None:
            return self.point
        return _polygon_centroid(self.polygon)

    @property
    def diameter(self):
        if self.polygon is None:
            raise ValueError("cell diameter needs the vertex polygon")
        return _polygon_diameter(self.polygon)


@dataclass(frozen=True)
class Face:
    """Read-only view of one face; `cell_out` is -1 on the boundary."""

    index: int
    cell_in: int
    cell_out: int
    area: float          # 1-D measure |K|L| of the face segment
    dist: float          # d_KL for interior faces, dist(x_K, face) on the boundary
    normal: np.ndarray   # unit normal, oriented cell_in -> cell_out / exterior

    @property
    def is_boundary(self):
        return self.cell_out < 0


class Mesh:
    """Array-backed admissible mesh.

    Attributes
    ----------
    cell_points : (n, 2) float array — the points x_K
    cell_volumes : (n,) float array — |K|
    face_cells : (m, 2) int array — (K, L), L = -1 for boundary faces
    face_areas : (m,) float array — |K|L|
    face_dists : (m,) float array — d_KL (x_K-to-face distance on the boundary)
    face_normals : (m, 2) float array — unit normals K -> L
    cell_polygons : list of (v, 2) arrays or None — vertex loops when generated
    domain : Domain or None
    """

    def __init__(self, cell_points, cell_volumes, face_cells, face_areas,
                 face_dists, face_normals, cell_polygons=None, domain=None,
                 structure=None, face_points=None):
        self.cell_points = np.ascontiguousarray(cell_points, dtype=float)
        self.cell_volumes = np.ascontiguousarray(cell_volumes, dtype=float)
        self.face_cells = np.ascontiguousarray(face_cells, dtype=np.int64)
        self.face_areas = np.ascontiguousarray(face_areas, dtype=float)
        self.face_dists = np.ascontiguousarray(face_dists, dtype=float)
        self.face_normals = np.ascontiguousarray(face_normals, dtype=float)
        self.cell_polygons = cell_polygons
        # (m, 2, 2) segment endpoints when generated; None for file meshes
        self.face_points = face_points
        self.domain = domain
        # ("cartesian", nx, ny) for tensor meshes; used for fast point location
        self.structure = structure
        self._h = None

    # -- basic protocol ----------------------------------------------------

    @property
    def n_cells(self):
        return len(self.cell_volumes)

    @property
    def n_faces(self):
        return len(self.face_areas)

    @property
    def interior(self):
        """Boolean mask of interior faces."""
        return self.face_cells[:, 1] >= 0

    def cell(self, i):
        poly = None if self.cell_polygons is None else self.cell_polygons[i]
        return Cell(i, self.cell_points[i], float(self.cell_volumes[i]), poly)

    def face(self, j):
        k, l = self.face_cells[j]
        return Face(j, int(k), int(l), float(self.face_areas[j]),
                    float(self.face_dists[j]), self.face_normals[j])

    @property
    def cell_centroids(self):
        if self.cell_polygons is None:
            return self.cell_points
        if not hasattr(self, "_centroids"):
            self._centroids = np.array(
                [_polygon_centroid(p) for p in self.cell_polygons])
        return self._centroids

    def boundary_perimeters(self):
        """Per-cell total face measure |dK| (scatter-add over faces)."""
        per = np.zeros(self.n_cells)
        np.add.at(per, self.face_cells[:, 0], self.face_areas)
        mask = self.interior
        np.add.at(per, self.face_cells[mask, 1], self.face_areas[mask])
        return per

    def locate(self, pts):
        """Cell indices containing `pts` (Cartesian meshes only)."""
        if not (self.structure and self.structure[0] == "cartesian"):
            raise NotImplementedError("point location requires a Cartesian mesh")
        _, nx, ny = self.structure
        d = self.domain
        pts = np.asarray(pts, dtype=float)
        ix = np.clip(((pts[..., 0] - d.x0) / d.width * nx).astype(np.int64), 0, nx - 1)
        iy = np.clip(((pts[..., 1] - d.y0) / d.height * ny).astype(np.int64), 0, ny - 1)
        return iy * nx + ix

    def __repr__(self):
        kind = self.structure[0] if self.structure else "generic"
        return f"Mesh({kind}, cells={self.n_cells}, faces={self.n_faces})"


# ---------------------------------------------------------------------------
# polygon helpers


def _polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _polygon_centroid(poly):
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def _polygon_diameter(poly):
    d2 = np.sum((poly[:, None, :] - poly[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


def _is_convex(poly, tol=1e-12):
    v = np.roll(poly, -1, axis=0) - poly
    cross = v[:, 0] * np.roll(v, -1, axis=0)[:, 1] - v[:, 1] * np.roll(v, -1, axis=0)[:, 0]
    scale = np.abs(cross).max() + 1e-300
    return bool(np.all(cross >= -tol * scale))


def _point_in_convex(poly, p, tol=1e-10):
    v = np.roll(poly, -1, axis=0) - poly
    w = p[None, :] - poly
    cross = v[:, 0] * w[:, 1] - v[:, 1] * w[:, 0]
    scale = max(np.abs(v).max(), 1.0)
    return bool(np.all(cross >= -tol * scale * scale))


def _clip_halfplane(poly, tags, point, normal, tag):
    """Sutherland-Hodgman clip of a tagged polygon by (x - point).normal <= 0.

    `tags[i]` labels the edge from vertex i to vertex i+1.  A freshly cut edge
    gets label `tag`, which is how Voronoi faces remember their neighbor.
    """
    d = (poly - point) @ normal
    keep = d <= 0.0
    if keep.all():
        return poly, tags
    if not keep.any():
        return poly[:0], []
    out_pts, out_tags = [], []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        if keep[i]:
            out_pts.append(poly[i])
            if keep[j]:
                out_tags.append(tags[i])
            else:
                t = d[i] / (d[i] - d[j])
                out_pts.append(poly[i] + t * (poly[j] - poly[i]))
                out_tags.append(tags[i])
                out_tags.append(tag)  # edge running along the cut line
        elif keep[j]:
            t = d[i] / (d[i] - d[j])
            out_pts.append(poly[i] + t * (poly[j] - poly[i]))
            out_tags.append(tags[i])
    # each appended point is paired with the tag of its outgoing edge
    return np.array(out_pts), out_tags


# ---------------------------------------------------------------------------
# generators


def build_cartesian_mesh(domain, nx, ny):
    """Uniform nx-by-ny tensor mesh of a rectangular domain.

    Cells are indexed row-major, id = iy * nx + ix.  x_K is the cell centroid,
    so center-to-center segments are orthogonal to the shared faces exactly.
    """
    if not isinstance(domain, Domain):
        domain = Domain(*domain)
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise InvalidMeshArgument("nx and ny must be positive")
    dx = domain.width / nx
    dy = domain.height / ny

    xs = domain.x0 + (np.arange(nx) + 0.5) * dx
    ys = domain.y0 + (np.arange(ny) + 0.5) * dy
    cx, cy = np.meshgrid(xs, ys)
    points = np.column_stack([cx.ravel(), cy.ravel()])
    volumes = np.full(nx * ny, dx * dy)

    def cid(ix, iy):
        return iy * nx + ix

    def vx(ix):
        return domain.x0 + ix * dx

    def vy(iy):
        return domain.y0 + iy * dy

    fc, fa, fd, fn, fp = [], [], [], [], []
    # interior vertical faces (normal +x)
    for iy in range(ny):
        for ix in range(nx - 1):
            fc.append((cid(ix, iy), cid(ix + 1, iy)))
            fa.append(dy)
            fd.append(dx)
            fn.append((1.0, 0.0))
            fp.append(((vx(ix + 1), vy(iy)), (vx(ix + 1), vy(iy + 1))))
    # interior horizontal faces (normal +y)
    for iy in range(ny - 1):
        for ix in range(nx):
            fc.append((cid(ix, iy), cid(ix, iy + 1)))
            fa.append(dx)
            fd.append(dy)
            fn.append((0.0, 1.0))
            fp.append(((vx(ix), vy(iy + 1)), (vx(ix + 1), vy(iy + 1))))
    # boundary faces: left, right, bottom, top
    for iy in range(ny):
        fc.append((cid(0, iy), -1)); fa.append(dy); fd.append(dx / 2); fn.append((-1.0, 0.0))
        fp.append(((vx(0), vy(iy)), (vx(0), vy(iy + 1))))
        fc.append((cid(nx - 1, iy), -1)); fa.append(dy); fd.append(dx / 2); fn.append((1.0, 0.0))
        fp.append(((vx(nx), vy(iy)), (vx(nx), vy(iy + 1))))
    for ix in range(nx):
        fc.append((cid(ix, 0), -1)); fa.append(dx); fd.append(dy / 2); fn.append((0.0, -1.0))
        fp.append(((vx(ix), vy(0)), (vx(ix + 1), vy(0))))
        fc.append((cid(ix, ny - 1), -1)); fa.append(dx); fd.append(dy / 2); fn.append((0.0, 1.0))
        fp.append(((vx(ix), vy(ny)), (vx(ix + 1), vy(ny))))

    polys = []
    for iy in range(ny):
        for ix in range(nx):
            x0 = domain.x0 + ix * dx
            y0 = domain.y0 + iy * dy
            polys.append(np.array([[x0, y0], [x0 + dx, y0],
                                   [x0 + dx, y0 + dy], [x0, y0 + dy]]))

    return Mesh(points, volumes, np.array(fc), np.array(fa), np.array(fd),
                np.array(fn), cell_polygons=polys, domain=domain,
                structure=("cartesian", nx, ny), face_points=np.array(fp))


def build_voronoi_mesh(seeds, domain):
    """Voronoi tessellation of a rectangle, clipped cell by cell.

    Each cell is the rectangle successively intersected with the bisector
    half-planes against every other seed (Sutherland-Hodgman).  x_K is the
    seed itself, which makes seed-to-seed segments orthogonal to the shared
    bisector faces by construction.

    Raises
    ------
    InvalidMeshArgument
        for duplicate seeds, seeds outside the domain, or seeds on its
        boundary (the admissibility definition needs x_K off the boundary).
    """
    if not isinstance(domain, Domain):
        domain = Domain(*domain)
    seeds = np.asarray(seeds, dtype=float)
    if seeds.ndim != 2 or seeds.shape[1] != 2 or len(seeds) < 1:
        raise InvalidMeshArgument("seeds must be a non-empty (n, 2) array")
    scale = max(domain.width, domain.height)
    d2 = np.sum((seeds[:, None, :] - seeds[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    if d2.min() <= (1e-12 * scale) ** 2:
        raise InvalidMeshArgument("duplicate seeds")
    inside = domain.contains(seeds) & ~domain.on_boundary(seeds, tol=1e-12 * scale)
    if not inside.all():
        raise InvalidMeshArgument("seeds must lie strictly inside the domain")

    n = len(seeds)
    rect = np.array([[domain.x0, domain.y0], [domain.x1, domain.y0],
                     [domain.x1, domain.y1], [domain.x0, domain.y1]])
    polys = []
    edge_tags = []  # per cell: list of (neighbor or -1) per edge
    for i in range(n):
        poly = rect.copy()
        tags = [-1, -1, -1, -1]
        order = np.argsort(d2[i])  # clip nearest first: fewer live edges
        for j in order:
            if not np.isfinite(d2[i, j]):
                continue
            mid = 0.5 * (seeds[i] + seeds[j])
            nrm = seeds[j] - seeds[i]
            nrm = nrm / np.hypot(*nrm)
            poly, tags = _clip_halfplane(poly, tags, mid, nrm, int(j))
            if len(poly) == 0:
                break
        if len(poly) < 3:
            raise InvalidMeshArgument(f"seed {i} produced a degenerate cell")
        # drop zero-length edges (collinear clip artifacts)
        keep_pts, keep_tags = [], []
        m = len(poly)
        for a in range(m):
            b = (a + 1) % m
            if np.hypot(*(poly[b] - poly[a])) > 1e-12 * scale:
                keep_pts.append(poly[a])
                keep_tags.append(tags[a])
        poly = np.array(keep_pts)
        polys.append(poly)
        edge_tags.append(keep_tags)

    volumes = np.array([_polygon_area(p) for p in polys])
    fc, fa, fd, fn, fp = [], [], [], [], []
    for i in range(n):
        poly, tags = polys[i], edge_tags[i]
        m = len(poly)
        for a in range(m):
            j = tags[a]
            b = (a + 1) % m
            length = np.hypot(*(poly[b] - poly[a]))
            if j >= 0 and j < i:
                continue  # recorded from the smaller index
            if j >= 0:
                dij = float(np.hypot(*(seeds[j] - seeds[i])))
                nrm = (seeds[j] - seeds[i]) / dij
                fc.append((i, j)); fa.append(length); fd.append(dij); fn.append(tuple(nrm))
            else:
                # boundary edge: outward rectangle normal
                ev = poly[b] - poly[a]
                nrm = np.array([ev[1], -ev[0]])
                nrm /= np.hypot(*nrm)
                mid = 0.5 * (poly[a] + poly[b])
                dist = float(abs((mid - seeds[i]) @ nrm))
                fc.append((i, -1)); fa.append(length); fd.append(dist); fn.append(tuple(nrm))
            fp.append((tuple(poly[a]), tuple(poly[b])))

    return Mesh(seeds, volumes, np.array(fc), np.array(fa), np.array(fd),
                np.array(fn), cell_polygons=polys, domain=domain,
                structure=("voronoi", n), face_points=np.array(fp))


# ---------------------------------------------------------------------------
# size and validation


def mesh_size(mesh):
    """h = max cell diameter (max pairwise vertex distance).

    File-loaded meshes carry no vertex loops; the diameter is then estimated
    from incident face distances (flagged by ``validate_admissibility``).
    """
    if mesh._h is not None:
        return mesh._h
    if mesh.cell_polygons is not None:
        h = max(_polygon_diameter(p) for p in mesh.cell_polygons)
    else:
        est = np.zeros(mesh.n_cells)
        inter = mesh.interior
        np.maximum.at(est, mesh.face_cells[:, 0], mesh.face_dists)
        np.maximum.at(est, mesh.face_cells[inter, 1], mesh.face_dists[inter])
        h = float(est.max())
    mesh._h = float(h)
    return mesh._h


@dataclass
class QualityReport:
    """Per-clause admissibility results; `passed=None` means skipped."""

    clauses: dict = field(default_factory=dict)
    h: float = float("nan")
    n_cells: int = 0
    n_faces: int = 0
    diameter_estimated: bool = False

    def record(self, name, passed, measured=None, detail=""):
        self.clauses[name] = {"passed": passed, "measured": measured,
                              "detail": detail}

    @property
    def ok(self):
        return all(c["passed"] is not False for c in self.clauses.values())

    def to_dict(self):
        return {
            "ok": self.ok,
            "h": self.h,
            "n_cells": self.n_cells,
            "n_faces": self.n_faces,
            "diameter_estimated": self.diameter_estimated,
            "clauses": self.clauses,
        }


def validate_admissibility(mesh, tol_orth=TOL_ORTH, tol_vol=TOL_VOL):
    """Check every admissibility clause numerically; never raises.

    Returns a :class:`QualityReport` whose clauses are individually marked
    passed / failed / skipped (skipped when the mesh lacks the data, e.g.
    vertex loops for file-loaded meshes).
    """
    rep = QualityReport(n_cells=mesh.n_cells, n_faces=mesh.n_faces)
    rep.diameter_estimated = mesh.cell_polygons is None
    rep.h = mesh_size(mesh)

    vol_ok = bool(np.all(mesh.cell_volumes > 0))
    rep.record("positive_volumes", vol_ok, float(mesh.cell_volumes.min()))
    area_ok = bool(np.all(mesh.face_areas > 0))
    rep.record("positive_face_areas", area_ok, float(mesh.face_areas.min()))
    dist_ok = bool(np.all(mesh.face_dists > 0))
    rep.record("positive_face_distances", dist_ok, float(mesh.face_dists.min()))

    inter = mesh.interior
    if inter.any():
        k = mesh.face_cells[inter, 0]
        l = mesh.face_cells[inter, 1]
        seg = mesh.cell_points[l] - mesh.cell_points[k]
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        nrm = mesh.face_normals[inter]
        # orthogonality: segment parallel to the face normal
        cross = np.abs(seg[:, 0] * nrm[:, 1] - seg[:, 1] * nrm[:, 0])
        worst = float((cross / np.maximum(seglen, 1e-300)).max())
        rep.record("orthogonality", worst <= tol_orth, worst)
        # orientation: normal points from K to L
        dot = np.sum(seg * nrm, axis=1)
        rep.record("normal_orientation", bool(np.all(dot > 0)), float(dot.min()))
        # stored d_KL consistent with the points
        derr = float(np.max(np.abs(seglen - mesh.face_dists[inter])
                            / np.maximum(seglen, 1e-300)))
        rep.record("distance_consistency", derr <= 1e-9, derr)
    else:
        rep.record("orthogonality", True, 0.0, "no interior faces")
        rep.record("normal_orientation", True)
        rep.record("distance_consistency", True, 0.0)

    if mesh.cell_polygons is not None:
        conv = all(_is_convex(p) for p in mesh.cell_polygons)
        rep.record("convexity", bool(conv))
        inpoly = all(
            _point_in_convex(mesh.cell_polygons[i], mesh.cell_points[i])
            for i in range(mesh.n_cells))
        rep.record("points_in_closure", bool(inpoly))
        vol_err = float(np.max(np.abs(
            np.array([_polygon_area(p) for p in mesh.cell_polygons])
            - mesh.cell_volumes) / mesh.cell_volumes))
        rep.record("volume_consistency", vol_err <= 1e-9, vol_err)
    else:
        rep.record("convexity", None, detail="no polygons (file mesh)")
        rep.record("points_in_closure", None, detail="no polygons (file mesh)")
        rep.record("volume_consistency", None, detail="no polygons (file mesh)")

    if mesh.domain is not None:
        off = ~mesh.domain.on_boundary(mesh.cell_points)
        rep.record("points_off_domain_boundary", bool(off.all()))
        tile_err = abs(mesh.cell_volumes.sum() - mesh.domain.area) / mesh.domain.area
        rep.record("tiling_volume", tile_err <= tol_vol, float(tile_err))
    else:
        rep.record("points_off_domain_boundary", None, detail="no domain")
        rep.record("tiling_volume", None, detail="no domain",
                   measured=float(mesh.cell_volumes.sum()))

    ratio = mesh.boundary_perimeters() / mesh.cell_volumes
    scaled = float(ratio.max()) * rep.h
    # |dK|/|K| <= C/h with a generous constant; uniform rectangles give 4*sqrt(2)
    rep.record("isoperimetric", scaled <= 64.0, scaled)

    # face antisymmetry is structural here (each interior face stored once);
    # record the convention so report readers see it was considered
    rep.record("single_face_storage", True,
               detail="interior faces stored once with oriented normal")
    return rep


# ---------------------------------------------------------------------------
# text format v1


def write_mesh(mesh, path_or_file):
    """Write the scheme-consumable geometry in the v1 text format."""
    own = isinstance(path_or_file, (str, bytes))
    f = open(path_or_file, "w") if own else path_or_file
    try:
        r = lambda v: repr(float(v))  # full-precision round-trip
        f.write(MESH_FORMAT_HEADER + "\n")
        f.write(f"cells {mesh.n_cells}\n")
        for i in range(mesh.n_cells):
            x, y = mesh.cell_points[i]
            f.write(f"{i} {r(x)} {r(y)} {r(mesh.cell_volumes[i])}\n")
        f.write(f"faces {mesh.n_faces}\n")
        for j in range(mesh.n_faces):
            k, l = mesh.face_cells[j]
            nx, ny = mesh.face_normals[j]
            f.write(f"{j} {k} {l} {r(mesh.face_areas[j])} "
                    f"{r(mesh.face_dists[j])} {r(nx)} {r(ny)}\n")
    finally:
        if own:
            f.close()


class MeshFormatError(ValueError):
    pass


def read_mesh(path_or_file):
    """Read a v1 text mesh.  The result has no vertex loops or domain."""
    own = isinstance(path_or_file, (str, bytes))
    f = open(path_or_file) if own else path_or_file
    try:
        lines = [ln.strip() for ln in f if ln.strip()]
    finally:
        if own:
            f.close()
    if not lines or lines[0] != MESH_FORMAT_HEADER:
        raise MeshFormatError(f"expected header {MESH_FORMAT_HEADER!r}")
    pos = 1

    def next_tokens():
        nonlocal pos
        if pos >= len(lines):
            raise MeshFormatError("unexpected end of mesh data")
        t = lines[pos].split(); pos += 1
        return t

    tok = next_tokens()
    if len(tok) != 2 or tok[0] != "cells":
        raise MeshFormatError("expected 'cells <n>'")
    n = int(tok[1])
    pts = np.empty((n, 2)); vols = np.empty(n)
    seen = np.zeros(n, dtype=bool)
    for _ in range(n):
        t = next_tokens()
        if len(t) != 4:
            raise MeshFormatError(f"bad cell line: {' '.join(t)!r}")
        i = int(t[0])
        if not (0 <= i < n) or seen[i]:
            raise MeshFormatError(f"bad or repeated cell id {i}")
        seen[i] = True
        pts[i] = (float(t[1]), float(t[2])); vols[i] = float(t[3])
    tok = next_tokens()
    if len(tok) != 2 or tok[0] != "faces":
        raise MeshFormatError("expected 'faces <m>'")
    m = int(tok[1])
    fc = np.empty((m, 2), dtype=np.int64)
    fa = np.empty(m); fd = np.empty(m); fn = np.empty((m, 2))
    fseen = np.zeros(m, dtype=bool)
    for _ in range(m):
        t = next_tokens()
        if len(t) != 7:
            raise MeshFormatError(f"bad face line: {' '.join(t)!r}")
        j = int(t[0])
        if not (0 <= j < m) or fseen[j]:
            raise MeshFormatError(f"bad or repeated face id {j}")
        fseen[j] = True
        k, l = int(t[1]), int(t[2])
        if not (0 <= k < n) or l >= n or l < -1:
            raise MeshFormatError(f"face {j} references bad cells ({k}, {l})")
        fc[j] = (k, l); fa[j] = float(t[3]); fd[j] = float(t[4])
        fn[j] = (float(t[5]), float(t[6]))
    if pos != len(lines):
        raise MeshFormatError("trailing content after face block")
    return Mesh(pts, vols, fc, fa, fd, fn)


def mesh_to_string(mesh):
    buf = io.StringIO()
    write_mesh(mesh, buf)
    return buf.getvalue()

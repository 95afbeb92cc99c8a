"""Logarithmic Kantorovich-Rubinstein distances between cell fields.

The distance D_delta(mu1, mu2) is the optimal-transport value for the cost
c(x, y) = log(|x - y|/delta + 1).  Because that cost is a concave increasing
function of a metric vanishing at zero, it is itself a metric, so D_delta
depends on mu1 - mu2 only: common mass at identical locations can be
cancelled before solving.  ``kr_signed`` exploits exactly that, which keeps
the LPs small when comparing two fields on the same mesh.

Every solve can be certified a posteriori: from the LP duals we build the
c-transform potential zeta(z) = min_j (c(z, y_j) - v_j), which is c-Lipschitz
by construction, and check that its dual objective matches the primal value.
A wrong optimum cannot pass that check, so the hand-rolled simplex engine is
never trusted blindly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial.distance import cdist

from . import _netsimplex
from .fields import CellField

__all__ = [
    "DiscreteMeasure",
    "TransportPlan",
    "KRResult",
    "CertificateReport",
    "CertificationFailure",
    "measure_from_cellfield",
    "kr_distance",
    "kr_signed",
    "dual_certify",
    "brute_force_kr",
    "log_cost",
]


class CertificationFailure(RuntimeError):
    """Dual certificate did not validate the reported optimum."""


def log_cost(dist, delta):
    """Transport cost log(dist/delta + 1); concave in dist, hence a metric."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return np.log1p(np.asarray(dist, dtype=float) / delta)


@dataclass
class DiscreteMeasure:
    """Atoms at ``points`` with the given weights.

    Proper measures have nonnegative weights; ``signed=True`` relaxes that
    for the intermediate difference measures produced by cell-field
    atomization, which are split into positive/negative parts before any
    distance is computed.
    """

    points: np.ndarray
    weights: np.ndarray
    signed: bool = False

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("one weight per support point required")
        if self.points.shape[0] and self.points.shape[1] != 2:
            raise ValueError("support points must be planar")
        if not self.signed and self.weights.size and self.weights.min() < 0:
            raise ValueError("negative weight in an unsigned measure")

    @property
    def n_atoms(self):
        return len(self.weights)

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def positive_part(self):
        m = self.weights > 0
        return DiscreteMeasure(self.points[m], self.weights[m])

    def negative_part(self):
        m = self.weights < 0
        return DiscreteMeasure(self.points[m], -self.weights[m])


@dataclass
class TransportPlan:
    """Sparse coupling: mass[t] moves from source atom src[t] to dst[t]."""

    src: np.ndarray
    dst: np.ndarray
    mass: np.ndarray

    def marginal_residuals(self, w1, w2):
        a = np.zeros(len(w1))
        b = np.zeros(len(w2))
        np.add.at(a, self.src, self.mass)
        np.add.at(b, self.dst, self.mass)
        return np.abs(a - w1).max(initial=0.0), np.abs(b - w2).max(initial=0.0)

    @property
    def n_arcs(self):
        return len(self.mass)


@dataclass
class KRResult:
    """Outcome of one distance evaluation.

    ``gap`` is the LP primal-dual gap from the solver's own potentials; the
    independent certificate (c-transform feasibility on all support pairs)
    is produced by ``dual_certify``.
    """

    value: float
    delta: float
    plan: TransportPlan
    dual_source: np.ndarray | None = None
    dual_target: np.ndarray | None = None
    gap: float = 0.0
    engine: str = "none"
    # retained supports so certification needs no external state
    support_source: np.ndarray = field(default=None, repr=False)
    support_target: np.ndarray = field(default=None, repr=False)
    weights_source: np.ndarray = field(default=None, repr=False)
    weights_target: np.ndarray = field(default=None, repr=False)


def _subcell_points(mesh, ppc):
    """Atom locations per cell; ppc in {1, 4, 9}.

    Cartesian meshes use the regular sub-grid of each rectangle (exact equal
    areas).  Polygonal meshes split each cell fan-wise into ppc wedges of
    equal area and use the wedge centroids, so every atom still carries
    |K|/ppc exactly.
    """
    if ppc == 1:
        return mesh.cell_centroids.copy()
    s = int(round(np.sqrt(ppc)))
    if mesh.structure and mesh.structure[0] == "cartesian":
        _, nx, ny = mesh.structure
        d = mesh.domain
        hx = d.width / nx
        hy = d.height / ny
        off = (np.arange(s) + 0.5) / s
        ox, oy = np.meshgrid(off, off, indexing="ij")
        sub = np.column_stack([ox.ravel(), oy.ravel()])  # in unit cell
        ix = np.arange(nx * ny) % nx
        iy = np.arange(nx * ny) // nx
        base = np.column_stack([d.x0 + ix * hx, d.y0 + iy * hy])
        pts = base[:, None, :] + sub[None, :, :] * np.array([hx, hy])
        return pts.reshape(-1, 2)
    if mesh.cell_polygons is None:
        raise ValueError("points_per_cell > 1 needs cell geometry; "
                         "file meshes carry none")
    out = np.empty((mesh.n_cells * ppc, 2))
    for ci, poly in enumerate(mesh.cell_polygons):
        c = mesh.cell_centroids[ci]
        nv = len(poly)
        # fan triangles and their areas
        tri = []
        for a in range(nv):
            p0, p1 = poly[a], poly[(a + 1) % nv]
            area = 0.5 * abs((p1[0] - p0[0]) * (c[1] - p0[1])
                             - (p1[1] - p0[1]) * (c[0] - p0[0]))
            tri.append((p0, p1, area))
        total = sum(t[2] for t in tri)
        target = total / ppc
        w_area = 0.0
        w_cx = 0.0
        w_cy = 0.0
        wedge = 0
        for p0, p1, area in tri:
            f0 = 0.0
            while f0 < 1.0 - 1e-14 and wedge < ppc:
                room = target - w_area
                frac = min(1.0 - f0, room / area if area > 0 else 1.0)
                f1 = f0 + frac
                q0 = p0 + f0 * (p1 - p0)
                q1 = p0 + f1 * (p1 - p0)
                piece = frac * area
                cx = (c[0] + q0[0] + q1[0]) / 3.0
                cy = (c[1] + q0[1] + q1[1]) / 3.0
                w_area += piece
                w_cx += piece * cx
                w_cy += piece * cy
                if w_area >= target * (1 - 1e-12):
                    out[ci * ppc + wedge] = (w_cx / w_area, w_cy / w_area)
                    wedge += 1
                    w_area = w_cx = w_cy = 0.0
                f0 = f1
        while wedge < ppc:  # numerical remainder: park at centroid
            out[ci * ppc + wedge] = c
            wedge += 1
    return out


def measure_from_cellfield(cell_field, points_per_cell=1):
    """Atomize a cell field: ppc atoms per cell, each of weight theta_K|K|/ppc."""
    if points_per_cell not in (1, 4, 9):
        raise ValueError("points_per_cell must be 1, 4 or 9")
    mesh = cell_field.mesh
    pts = _subcell_points(mesh, points_per_cell)
    w = np.repeat(cell_field.values * mesh.cell_volumes / points_per_cell,
                  points_per_cell)
    return DiscreteMeasure(pts, w, signed=bool(w.size and w.min() < 0))


def _perturbed_retry(a, b, C, block):
    """Re-solve with distinct masses, then transfer the basis back exactly."""
    m, n = len(a), len(b)
    eps = 1e-9 * a.sum() / (m + n) ** 2
    ap = a + eps * (np.arange(m) + 1.0)
    bp = b + eps * (np.arange(n) + 1.0)
    bp *= ap.sum() / bp.sum()
    status, _, ai, aj, _, u, v, iters = _netsimplex.solve_transport(
        ap, bp, C, block=block)
    if status != _netsimplex.OPTIMAL:
        raise RuntimeError(
            "transport solve failed to converge even after perturbation")
    # basic flows for the original masses; clamp the roundoff negatives that
    # degenerate arcs can produce
    flows = np.maximum(_netsimplex.flows_from_basis(ai, aj, a, b), 0.0)
    return ai, aj, flows, u, v, iters


def kr_distance(mu1, mu2, delta, engine="network-simplex", tol_mass=1e-9):
    """Exact D_delta between two unsigned discrete measures.

    Masses must agree within ``tol_mass`` (relative); the second measure is
    then rescaled by the <= tol_mass factor that makes the coupling polytope
    nonempty in floating point.  Engines: "network-simplex" (default) or
    "highs" (scipy's LP, used as an independent cross-check).
    """
    if mu1.signed or mu2.signed:
        raise ValueError("kr_distance needs unsigned measures; "
                         "use kr_signed for signed differences")
    delta = float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    m1 = mu1.total_mass
    m2 = mu2.total_mass
    scale = max(abs(m1), abs(m2))
    if abs(m1 - m2) > tol_mass * max(scale, 1e-300):
        raise ValueError(
            f"unequal masses: {m1} vs {m2} (relative difference "
            f"{abs(m1 - m2) / max(scale, 1e-300):.3e} exceeds {tol_mass})")
    i1 = np.flatnonzero(mu1.weights > 0)
    i2 = np.flatnonzero(mu2.weights > 0)
    if len(i1) == 0 and len(i2) == 0:
        return KRResult(0.0, delta,
                        TransportPlan(np.empty(0, int), np.empty(0, int),
                                      np.empty(0)),
                        engine="trivial",
                        support_source=np.empty((0, 2)),
                        support_target=np.empty((0, 2)),
                        weights_source=np.empty(0), weights_target=np.empty(0))
    if len(i1) == 0 or len(i2) == 0:
        raise ValueError("one measure is zero and the other is not")
    X = mu1.points[i1]
    Y = mu2.points[i2]
    a = mu1.weights[i1].astype(float)
    b = mu2.weights[i2].astype(float)
    b = b * (a.sum() / b.sum())
    C = log_cost(cdist(X, Y), delta)

    if engine == "network-simplex":
        status, value, ai, aj, flows, u, v, iters = \
            _netsimplex.solve_transport(a, b, C)
        if status == _netsimplex.ITERATION_LIMIT:
            ai, aj, flows, u, v, iters = _perturbed_retry(a, b, C, None)
            value = float(flows @ C[ai, aj])
        rc_min = _min_reduced_cost(C, u, v)
        if rc_min < -1e-9:
            raise RuntimeError(
                f"transport duals infeasible (min reduced cost {rc_min:.3e})")
    elif engine == "highs":
        value, ai, aj, flows, u, v = _highs_solve(a, b, C)
    else:
        raise ValueError(f"unknown engine {engine!r}")

    keep = flows > 0
    plan = TransportPlan(i1[ai[keep]], i2[aj[keep]], flows[keep])
    ra, rb = plan.marginal_residuals(_scatter(mu1.weights.shape[0], i1, a),
                                     _scatter(mu2.weights.shape[0], i2, b))
    mass = a.sum()
    if max(ra, rb) > 1e-10 * max(mass, 1e-300):
        raise RuntimeError(
            f"plan marginals off by {max(ra, rb):.3e} (mass {mass:.3e})")
    gap = abs(a @ u + b @ v - value)
    return KRResult(float(value), delta, plan, dual_source=u, dual_target=v,
                    gap=float(gap), engine=engine,
                    support_source=X, support_target=Y,
                    weights_source=a, weights_target=b)


def _scatter(n, idx, vals):
    out = np.zeros(n)
    out[idx] = vals
    return out


def _min_reduced_cost(C, u, v, chunk=4096):
    m = C.shape[0]
    worst = np.inf
    for s in range(0, m, chunk):
        e = min(m, s + chunk)
        worst = min(worst, float((C[s:e] - u[s:e, None] - v[None, :]).min()))
    return worst


def _highs_solve(a, b, C):
    from scipy.optimize import linprog
    import scipy.sparse as sp

    m, n = C.shape
    arcs = m * n
    ii = np.repeat(np.arange(m), n)
    jj = np.tile(np.arange(n), m)
    rows = np.concatenate([ii, m + jj])
    cols = np.concatenate([np.arange(arcs), np.arange(arcs)])
    A = sp.coo_matrix((np.ones(2 * arcs), (rows, cols)),
                      shape=(m + n, arcs)).tocsr()[:-1]
    rhs = np.concatenate([a, b])[:-1]
    res = linprog(C.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None),
                  method="highs")
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    F = res.x.reshape(m, n)
    ai, aj = np.nonzero(F > 0)
    duals = np.append(res.eqlin.marginals, 0.0)
    return float(res.fun), ai, aj, F[ai, aj], duals[:m], duals[m:]


def _merge_colocated(points, weights):
    """Sum weights of exactly coinciding support points."""
    order = np.lexsort((points[:, 1], points[:, 0]))
    P = points[order]
    W = weights[order]
    new = np.empty(len(P), dtype=bool)
    new[0] = True
    np.logical_or(P[1:, 0] != P[:-1, 0], P[1:, 1] != P[:-1, 1], out=new[1:])
    gid = np.cumsum(new) - 1
    agg = np.zeros(gid[-1] + 1)
    np.add.at(agg, gid, W)
    return P[new], agg


def _prune_measure(points, weights, rel):
    """Merge the lightest atoms (<= rel of total mass) into nearest survivors."""
    if rel <= 0 or len(weights) <= 2:
        return points, weights
    order = np.argsort(weights)
    cum = np.cumsum(weights[order])
    total = cum[-1]
    ndrop = int(np.searchsorted(cum, rel * total, side="right"))
    ndrop = min(ndrop, len(weights) - 1)
    if ndrop == 0:
        return points, weights
    drop = order[:ndrop]
    keep = order[ndrop:]
    from scipy.spatial import cKDTree
    tree = cKDTree(points[keep])
    _, nearest = tree.query(points[drop])
    w = weights[keep].copy()
    np.add.at(w, nearest, weights[drop])
    return points[keep], w


def kr_signed(field1, field2, delta, points_per_cell=1, engine="network-simplex",
              tol_mass=1e-9, prune=0.0):
    """D_delta between two cell fields via the signed-difference reduction.

    Atomizes field1 - field2, cancels co-located mass exactly, splits the
    remainder into positive and negative parts and solves the transport LP
    between them — exact because the log cost is a metric, so the distance
    depends on the difference measure only.  ``prune`` > 0 merges the
    lightest atoms (up to that relative mass per side) into their nearest
    surviving neighbour before solving; the induced error is at most
    prune * mass * max-cost.
    """
    mass1 = field1.mass()
    mass2 = field2.mass()
    scale = max(abs(mass1), abs(mass2))
    if abs(mass1 - mass2) > tol_mass * max(scale, 1e-300):
        raise ValueError(
            f"unequal masses: {mass1} vs {mass2}")
    same_mesh = field1.mesh is field2.mesh
    if same_mesh:
        pts = _subcell_points(field1.mesh, points_per_cell)
        w = np.repeat((field1.values - field2.values)
                      * field1.mesh.cell_volumes / points_per_cell,
                      points_per_cell)
    else:
        muA = measure_from_cellfield(field1, points_per_cell)
        muB = measure_from_cellfield(field2, points_per_cell)
        pts = np.vstack([muA.points, muB.points])
        w = np.concatenate([muA.weights, -muB.weights])
        pts, w = _merge_colocated(pts, w)
    pos = w > 0
    neg = w < 0
    if not pos.any() and not neg.any():
        return KRResult(0.0, float(delta),
                        TransportPlan(np.empty(0, int), np.empty(0, int),
                                      np.empty(0)),
                        engine="trivial",
                        support_source=np.empty((0, 2)),
                        support_target=np.empty((0, 2)),
                        weights_source=np.empty(0), weights_target=np.empty(0))
    P1, W1 = pts[pos], w[pos]
    P2, W2 = pts[neg], -w[neg]
    if prune > 0:
        P1, W1 = _prune_measure(P1, W1, prune)
        P2, W2 = _prune_measure(P2, W2, prune)
    mu_p = DiscreteMeasure(P1, W1)
    mu_n = DiscreteMeasure(P2, W2)
    return kr_distance(mu_p, mu_n, delta, engine=engine, tol_mass=max(
        tol_mass, 1e-12 if prune == 0 else 10 * prune))


@dataclass
class CertificateReport:
    """Independent optimality certificate for a KRResult."""

    primal: float
    dual_value: float
    gap: float
    gap_rel: float
    max_lipschitz_violation: float
    n_support: int
    passed: bool

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def dual_certify(result, delta=None, tol_gap=1e-8, tol_feas=1e-8, chunk=2048):
    """Certify a solved instance through the c-transform potential.

    From the LP duals (u, v) define zeta(z) = min_j (c(z, y_j) - v_j) on the
    union of supports.  The construction is c-Lipschitz whenever c is a
    metric, satisfies zeta(x_i) >= u_i and zeta(y_j) <= -v_j, so its dual
    objective sum a zeta(x) - sum b zeta(y) is sandwiched between the LP dual
    and primal values.  The numeric check of Lipschitz feasibility on all
    support pairs plus the gap bound therefore certifies optimality without
    trusting the solver.  Raises CertificationFailure on violation.
    """
    if result.engine == "trivial":
        return CertificateReport(0.0, 0.0, 0.0, 0.0, 0.0, 0, True)
    if result.dual_target is None:
        raise ValueError("result carries no dual potentials")
    delta = float(result.delta if delta is None else delta)
    X = result.support_source
    Y = result.support_target
    a = result.weights_source
    b = result.weights_target
    v = result.dual_target

    def ctrans(Z):
        out = np.empty(len(Z))
        for s in range(0, len(Z), chunk):
            e = min(len(Z), s + chunk)
            c = log_cost(cdist(Z[s:e], Y), delta)
            out[s:e] = (c - v[None, :]).min(axis=1)
        return out

    zx = ctrans(X)
    zy = ctrans(Y)
    dual_value = float(a @ zx - b @ zy)
    primal = result.value
    gap = primal - dual_value
    gap_rel = abs(gap) / max(abs(primal), 1e-300)

    Z = np.vstack([X, Y])
    zz = np.concatenate([zx, zy])
    worst = 0.0
    for s in range(0, len(Z), chunk):
        e = min(len(Z), s + chunk)
        c = log_cost(cdist(Z[s:e], Z), delta)
        viol = np.abs(zz[s:e, None] - zz[None, :]) - c
        worst = max(worst, float(viol.max()))
    passed = worst <= tol_feas and abs(gap) <= tol_gap * abs(primal) + 1e-12
    report = CertificateReport(primal=primal, dual_value=dual_value,
                               gap=float(gap), gap_rel=float(gap_rel),
                               max_lipschitz_violation=worst,
                               n_support=len(Z), passed=bool(passed))
    if not passed:
        raise CertificationFailure(
            f"certificate rejected: lipschitz violation {worst:.3e}, "
            f"gap {gap:.3e} (primal {primal:.6e})")
    return report


def brute_force_kr(mu1, mu2, delta, max_support=8):
    """Exact-rational transportation simplex for tiny instances.

    Independent of the network-simplex engine: dense tableau, Bland's rule
    on entering and leaving arcs, all pivoting in Fraction arithmetic on the
    float cost values, so the returned optimum is exact for the given data.
    Supports up to ``max_support`` atoms per side.
    """
    i1 = np.flatnonzero(mu1.weights > 0)
    i2 = np.flatnonzero(mu2.weights > 0)
    if len(i1) == 0 and len(i2) == 0:
        return 0.0
    m, n = len(i1), len(i2)
    if m > max_support or n > max_support:
        raise ValueError(
            f"brute_force_kr caps support at {max_support} (got {m}x{n})")
    a = [Fraction(float(w)) for w in mu1.weights[i1]]
    b = [Fraction(float(w)) for w in mu2.weights[i2]]
    sa = sum(a)
    sb = sum(b)
    if sb == 0:
        raise ValueError("zero-mass target with nonzero source")
    rel = abs(sa - sb) / max(sa, sb)
    if rel > Fraction(1, 10**9):
        raise ValueError(f"unequal masses: {float(sa)} vs {float(sb)}")
    b = [x * sa / sb for x in b]
    D = cdist(mu1.points[i1], mu2.points[i2])
    C = [[Fraction(float(np.log1p(D[i, j] / delta))) for j in range(n)]
         for i in range(m)]

    # northwest-corner basic solution: exactly m+n-1 basic arcs
    basis = []          # list of (i, j)
    flow = {}
    ra = a[:]
    rb = b[:]
    i = j = 0
    for _ in range(m + n - 1):
        basis.append((i, j))
        t = min(ra[i], rb[j])
        flow[(i, j)] = t
        ra[i] -= t
        rb[j] -= t
        if len(basis) == m + n - 1:
            break
        if ra[i] == 0 and i < m - 1:
            i += 1
        else:
            j += 1

    zero = Fraction(0)
    for _ in range(200000):
        # duals from the basis tree
        u = [None] * m
        v = [None] * n
        u[0] = zero
        changed = True
        while changed:
            changed = False
            for (bi, bj) in basis:
                if u[bi] is not None and v[bj] is None:
                    v[bj] = C[bi][bj] - u[bi]
                    changed = True
                elif v[bj] is not None and u[bi] is None:
                    u[bi] = C[bi][bj] - v[bj]
                    changed = True
        entering = None
        for bi in range(m):          # Bland: first negative reduced cost
            for bj in range(n):
                if (bi, bj) in flow:
                    continue
                if C[bi][bj] - u[bi] - v[bj] < 0:
                    entering = (bi, bj)
                    break
            if entering:
                break
        if entering is None:
            break
        # unique cycle in basis + entering: search alternating row/col path
        adj_row = {}
        adj_col = {}
        for (bi, bj) in basis:
            adj_row.setdefault(bi, []).append(bj)
            adj_col.setdefault(bj, []).append(bi)

        target_i, target_j = entering

        def find_path(ci, cj, visited):
            """Path of basic arcs from (row ci) back to row target_i,
            alternating column/row moves, starting by leaving cell (ci,cj)."""
            for nj in adj_row.get(ci, []):
                if nj == cj:
                    continue
                if nj == target_j:
                    return [(ci, nj)]
                for ni in adj_col.get(nj, []):
                    if ni == ci or ni in visited:
                        continue
                    rest = find_path(ni, nj, visited | {ni})
                    if rest is not None:
                        return [(ci, nj), (ni, nj)] + rest
            return None

        path = find_path(target_i, None, {target_i})
        if path is None:
            raise RuntimeError("degenerate basis lost connectivity")
        cycle = [entering] + path
        # signs alternate starting with + on the entering arc
        neg = cycle[1::2]
        tmin = min(flow[arc] for arc in neg)
        leave = min((arc for arc in neg if flow[arc] == tmin))
        for s, arc in enumerate(cycle):
            if s % 2 == 0:
                flow[arc] = flow.get(arc, zero) + tmin
            else:
                flow[arc] -= tmin
        del flow[leave]
        basis = [arc if arc != leave else entering for arc in basis]
    else:
        raise RuntimeError("brute-force simplex did not terminate")

    return float(sum(C[i][j] * f for (i, j), f in flow.items()))

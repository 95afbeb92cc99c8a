"""Implicit upwind finite-volume scheme for advection-diffusion.

Each time step solves the linear system whose row for cell K reads

    (1/k + sum_L (|K|L|/|K|)(u_KL^+ + kappa/d_KL)) theta_K^{n+1}
        - sum_L (|K|L|/|K|)(u_KL^- + kappa/d_KL) theta_L^{n+1} = theta_K^n / k

with the sum over neighbours L of K and no contribution from boundary faces.
The matrix is an M-matrix, so the step is well-posed, conservative and
monotone; the monitors in this module track the quantitative versions of
those guarantees (mass drift, minimum value, L^q stability with the
compressibility factor, discrete energy sums, and the weak BV sums that the
convergence analysis rests on).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import discrete_divergence
from .fields import CellField, FluxField

__all__ = [
    "SchemeConfig",
    "LinearSystem",
    "Trajectory",
    "SolverFailure",
    "assemble_step",
    "step",
    "solve",
    "interpolant_at",
    "StabilityReport",
    "BVReport",
    "stability_monitor",
    "weak_bv_monitor",
    "q_mean",
    "elementary_inequality_gap",
]

_DIRECT_LIMIT = 200_000  # cells; above this fall back to BiCGStab


class SolverFailure(RuntimeError):
    """Linear solver did not reach the requested residual."""


@dataclass
class SchemeConfig:
    """Parameters of one scheme run.

    ``kmax`` is the maximal admissible time step of the stability theory,
    computed from the continuous velocity (see ``compute_kmax``); it is not
    derivable from the discretized fluxes alone, so the caller supplies it.
    ``kmax=None`` skips the gate.  ``force=True`` overrides a violation.
    """

    kappa: float
    k: float
    T: float
    q: float = 2.0
    alpha: float = 2.0
    solver_tol: float = 1e-12
    max_iter: int = 2000
    kmax: float | None = None
    force: bool = False

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.k <= 0 or self.T <= 0:
            raise ValueError("k and T must be positive")
        if self.q <= 1:
            raise ValueError("q must exceed 1")
        if self.alpha <= 1:
            raise ValueError("alpha must exceed 1")
        ratio = self.T / self.k
        if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
            raise ValueError(
                f"T/k = {ratio} is not an integer; choose N and set k = T/N")
        if self.kmax is not None and self.k > self.kmax * (1 + 1e-12) \
                and not self.force:
            raise ValueError(
                f"time step k = {self.k} exceeds kmax = {self.kmax}; "
                "reduce k or set force=True")

    @property
    def n_steps(self):
        return int(round(self.T / self.k))


class LinearSystem:
    """One assembled implicit step: sparse matrix plus right-hand side slot.

    The right-hand side is theta^n / k and is attached by ``step``; the
    matrix only depends on the slab index, so steady fields reuse one system
    (and one factorization) for the whole run.
    """

    def __init__(self, A, n, cfg):
        self.A = A
        self.b = None
        self.n = n
        self.cfg = cfg
        self._factor = None
        d = A.diagonal()
        if not np.all(d > 0):
            raise ValueError("assembled matrix has a nonpositive diagonal")
        off_max = (A - sp.diags(d)).max()
        if off_max > 1e-14 * d.max():
            raise ValueError("assembled matrix has a positive off-diagonal")
        self.offdiag_max = float(off_max)
        # row sum = 1/k + (div u)_K; may dip below zero only past the
        # time-step gate, so record it rather than reject
        self.row_sum_min = float(np.asarray(A.sum(axis=1)).ravel().min())

    @property
    def n_cells(self):
        return self.A.shape[0]

    def factor(self):
        if self._factor is None:
            self._factor = spla.splu(self.A.tocsc())
        return self._factor


def assemble_step(mesh, flux, cfg, n, form="upwind"):
    """Assemble the implicit system for slab ``n``.

    ``form`` selects the algebraic route: "upwind" uses the positive/negative
    flux split directly, "symmetric" the equivalent central + |u| + diffusion
    splitting.  Both produce the same matrix to rounding; keeping the two
    routes separate lets tests confirm the identity u^± = (|u| ± u)/2 at the
    assembled-matrix level.
    """
    if not 0 <= n < flux.n_steps:
        raise IndexError(f"slab index {n} out of range [0, {flux.n_steps})")
    vals = flux.slab(n)
    inter = mesh.interior
    K = mesh.face_cells[inter, 0]
    L = mesh.face_cells[inter, 1]
    tau = mesh.face_areas[inter]
    d = mesh.face_dists[inter]
    u = vals[inter]
    volK = mesh.cell_volumes[K]
    volL = mesh.cell_volumes[L]
    kap = cfg.kappa

    if form == "upwind":
        up = 0.5 * (np.abs(u) + u)      # u_KL^+
        um = 0.5 * (np.abs(u) - u)      # u_KL^-
        dKK = tau / volK * (up + kap / d)
        dKL = -tau / volK * (um + kap / d)
        dLL = tau / volL * (um + kap / d)   # u_LK^+ = u_KL^-
        dLK = -tau / volL * (up + kap / d)
    elif form == "symmetric":
        au = np.abs(u)
        dKK = tau / volK * (0.5 * u + 0.5 * au + kap / d)
        dKL = tau / volK * (0.5 * u - 0.5 * au - kap / d)
        dLL = tau / volL * (-0.5 * u + 0.5 * au + kap / d)
        dLK = tau / volL * (-0.5 * u - 0.5 * au - kap / d)
    else:
        raise ValueError(f"unknown assembly form {form!r}")

    nc = mesh.n_cells
    rows = np.concatenate([K, K, L, L, np.arange(nc)])
    cols = np.concatenate([K, L, L, K, np.arange(nc)])
    data = np.concatenate([dKK, dKL, dLL, dLK, np.full(nc, 1.0 / cfg.k)])
    A = sp.coo_matrix((data, (rows, cols)), shape=(nc, nc)).tocsr()
    return LinearSystem(A, n, cfg)


def step(theta_n, system, cfg):
    """Advance one time step; checks the residual against the solver tolerance."""
    b = theta_n.values / cfg.k
    system.b = b
    if system.n_cells <= _DIRECT_LIMIT:
        x = system.factor().solve(b)
    else:
        x, info = spla.bicgstab(system.A, b, rtol=cfg.solver_tol,
                                maxiter=cfg.max_iter)
        if info != 0:
            raise SolverFailure(
                f"BiCGStab did not converge (info={info}) at slab {system.n}")
    resid = np.abs(system.A @ x - b).max()
    bound = cfg.solver_tol * max(np.abs(b).max(), 1e-300)
    if resid > bound:
        raise SolverFailure(
            f"residual {resid:.3e} exceeds {bound:.3e} at slab {system.n}")
    return CellField(theta_n.mesh, x)


class Trajectory:
    """Solution history with per-step monitor records.

    ``store="all"`` keeps every theta^n; ``store="snapshots"`` keeps only the
    requested times (rounded to grid times) to bound memory on long runs.
    Monitors (mass, min/max, L^q norms, BV increments, energy sums, negative
    part of the discrete divergence) are accumulated during the run either
    way.  Treat instances as immutable once ``solve`` returns.
    """

    def __init__(self, mesh, cfg, store, stored_steps, fields, monitors,
                 n_steps):
        self.mesh = mesh
        self.cfg = cfg
        self.store = store
        self.stored_steps = stored_steps      # sorted array of step indices
        self.fields = fields                  # CellField per stored step
        self.monitors = monitors
        self.n_steps = n_steps

    @property
    def times(self):
        """Times of the stored fields."""
        return self.stored_steps * self.cfg.k

    def field_at_step(self, n):
        idx = np.searchsorted(self.stored_steps, n)
        if idx == len(self.stored_steps) or self.stored_steps[idx] != n:
            raise KeyError(
                f"step {n} not stored (store={self.store!r}); "
                "run with store='all' to keep every step")
        return self.fields[idx]

    @property
    def initial(self):
        return self.field_at_step(0)

    @property
    def final(self):
        return self.field_at_step(self.n_steps)

    def mass_drift(self):
        m = self.monitors["mass"]
        scale = max(abs(m[0]), 1e-300)
        return float(np.abs(m - m[0]).max() / scale)

    def min_value(self):
        return float(self.monitors["min"].min())


def _snapshot_steps(cfg, snapshot_times):
    N = cfg.n_steps
    if snapshot_times is None:
        frac = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        steps = np.round(frac * N).astype(int)
    else:
        steps = np.round(np.asarray(snapshot_times, dtype=float) / cfg.k)
        steps = steps.astype(int)
        if (steps < 0).any() or (steps > N).any():
            raise ValueError("snapshot times outside [0, T]")
    steps = np.unique(np.concatenate([steps, [0, N]]))
    return steps


def solve(theta0, flux, cfg, store="all", snapshot_times=None):
    """Run the scheme over the whole horizon.

    Returns a Trajectory.  Deterministic: direct factorization, fixed
    assembly order.  For steady fields the matrix is assembled and factorized
    once and reused for every step.
    """
    mesh = theta0.mesh
    if mesh is not flux.mesh:
        raise ValueError("datum and flux live on different meshes")
    if abs(cfg.k - flux.k) > 1e-12 * cfg.k or abs(cfg.T - flux.T) > 1e-12 * cfg.T:
        raise ValueError(
            f"config (k={cfg.k}, T={cfg.T}) does not match the discretized "
            f"velocity (k={flux.k}, T={flux.T})")
    N = cfg.n_steps
    if store not in ("all", "snapshots"):
        raise ValueError("store must be 'all' or 'snapshots'")
    keep = (np.arange(N + 1) if store == "all"
            else _snapshot_steps(cfg, snapshot_times))
    keep_set = set(int(s) for s in keep)

    q_set = sorted({1.5, 2.0, float(cfg.q)})
    r_set = sorted({1.5, 2.0, min(float(cfg.q), 2.0)})
    vol = mesh.cell_volumes
    inter = mesh.interior
    fK = mesh.face_cells[inter, 0]
    fL = mesh.face_cells[inter, 1]
    tau = mesh.face_areas[inter]
    fd = mesh.face_dists[inter]

    mass = np.empty(N + 1)
    vmin = np.empty(N + 1)
    vmax = np.empty(N + 1)
    lq = {qq: np.empty(N + 1) for qq in q_set}
    st_inc = np.zeros(N)          # sum_K |K| |theta^{n+1}_K - theta^n_K|
    ss_inc = np.zeros(N)          # sum_K sum_{L~K} tau |theta_K - theta_L| at n+1
    e1 = {r: np.zeros(N) for r in r_set}
    e2 = {r: np.zeros(N) for r in r_set}
    div_neg = np.zeros(N)         # max_K (div u)_K^{n,-}

    def record_state(n, th):
        mass[n] = vol @ th
        vmin[n] = th.min()
        vmax[n] = th.max()
        ath = np.abs(th)
        for qq in q_set:
            lq[qq][n] = (vol @ ath**qq) ** (1.0 / qq)

    def weighted_sq(diff, mean, r):
        """(diff)^2 * mean^{r-2} with the 0/0 convention -> 0.

        A mean at (or rounded below) zero only occurs when the difference is
        itself at roundoff level, so those terms are dropped rather than
        letting 0^{r-2} blow up."""
        if r == 2.0:
            return diff * diff
        out = np.zeros_like(diff)
        m = (diff != 0.0) & (mean > 0.0)
        out[m] = diff[m] ** 2 * mean[m] ** (r - 2.0)
        return out

    theta = theta0.values.copy()
    record_state(0, theta)
    fields = []
    if 0 in keep_set:
        fields.append((0, CellField(mesh, theta.copy())))

    system = None
    for n in range(N):
        if system is None or not flux.steady:
            system = assemble_step(mesh, flux, cfg, 0 if flux.steady else n)
        if flux.steady and n > 0:
            dneg = div_neg[0]
        else:
            dneg = max(0.0, -discrete_divergence(flux, mesh, system.n).min())
        div_neg[n] = dneg

        new = step(CellField(mesh, theta), system, cfg).values
        record_state(n + 1, new)
        st_inc[n] = vol @ np.abs(new - theta)
        dKL = new[fK] - new[fL]
        ss_inc[n] = 2.0 * (tau @ np.abs(dKL))
        u_abs = np.abs(flux.slab(system.n)[inter])
        mean_t = 0.5 * (new + theta)
        mean_s = 0.5 * (new[fK] + new[fL])
        for r in r_set:
            e1[r][n] = vol @ weighted_sq(new - theta, mean_t, r)
            e2[r][n] = 2.0 * ((tau * (u_abs + cfg.kappa / fd))
                              @ weighted_sq(dKL, mean_s, r))
        theta = new
        if (n + 1) in keep_set:
            fields.append((n + 1, CellField(mesh, theta.copy())))

    stored = np.array([s for s, _ in fields])
    monitors = {
        "mass": mass, "min": vmin, "max": vmax, "lq": lq,
        "st_inc": st_inc, "ss_inc": ss_inc,
        "e1": e1, "e2": e2, "div_neg": div_neg,
    }
    return Trajectory(mesh, cfg, store, stored, [f for _, f in fields],
                      monitors, N)


def interpolant_at(traj, t):
    """Piecewise-linear-in-time evaluation of the trajectory at ``t``."""
    cfg = traj.cfg
    if not -1e-12 <= t <= cfg.T * (1 + 1e-12):
        raise ValueError(f"t = {t} outside [0, {cfg.T}]")
    t = min(max(t, 0.0), cfg.T)
    s = t / cfg.k
    n = min(int(np.floor(s)), traj.n_steps - 1)
    lam = s - n
    if abs(lam) < 1e-12:
        return traj.field_at_step(n)
    if abs(lam - 1.0) < 1e-12:
        return traj.field_at_step(n + 1)
    a = traj.field_at_step(n).values
    b = traj.field_at_step(n + 1).values
    return CellField(traj.mesh, (1.0 - lam) * a + lam * b)


@dataclass
class StabilityReport:
    """Measured vs predicted sides of the L^q and energy estimates."""

    q: float
    alpha: float
    r: float
    applicable: bool          # nonnegative initial data
    lam: float                # compressibility factor Lambda_{k,h}
    lq_max: float
    lq_bound: float
    lq_pass: bool
    energy_lhs: float
    energy_rhs: float
    energy_pass: bool
    c_r: float

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def stability_monitor(traj, flux, q=None, alpha=None):
    """Evaluate the L^q stability bound and the discrete energy estimate.

    The bound reads max_n ||theta^n||_q <= Lambda^{alpha(1-1/q)} ||theta^0||_q
    with Lambda = exp(k * sum_n max_K (div u)_K^{n,-}), and the energy
    estimate bounds the temporal + flux dissipation sums (weight exponent
    r - 2, r = min{q, 2} by default) by C_r (1 + (r-1) log Lambda)
    Lambda^{alpha(r-1)} ||theta^0||_r^r with C_r = 2 max{2^{2-r}, r}/(r(r-1)).
    Both only apply to nonnegative data; otherwise the report is marked
    inapplicable and the pass flags are vacuously true.
    """
    cfg = traj.cfg
    q = float(cfg.q if q is None else q)
    alpha = float(cfg.alpha if alpha is None else alpha)
    r = min(q, 2.0)
    mon = traj.monitors
    applicable = bool(traj.initial.values.min() >= 0.0)

    lam = float(np.exp(cfg.k * mon["div_neg"].sum()))

    if q in mon["lq"]:
        norms = mon["lq"][q]
    else:
        vol = traj.mesh.cell_volumes
        if traj.store != "all":
            raise ValueError(
                f"L^{q} norms were not tracked and not all steps are stored; "
                "rerun with store='all' or pass a tracked q")
        norms = np.array([(vol @ np.abs(f.values) ** q) ** (1 / q)
                          for f in traj.fields])
    lq_max = float(norms.max())
    lq_bound = float(lam ** (alpha * (1 - 1 / q)) * norms[0])

    c_r = 2.0 * max(2.0 ** (2.0 - r), r) / (r * (r - 1.0))
    if r in mon["e1"]:
        lhs = float(mon["e1"][r].sum() + cfg.k * mon["e2"][r].sum())
    else:
        raise ValueError(
            f"energy sums for r = {r} were not tracked during the run")
    vol = traj.mesh.cell_volumes
    norm_r = float(vol @ np.abs(traj.initial.values) ** r)
    rhs = float(c_r * (1 + (r - 1) * np.log(lam)) * lam ** (alpha * (r - 1))
                * norm_r)

    tol = 1e-9
    lq_pass = (not applicable) or lq_max <= lq_bound + tol
    energy_pass = (not applicable) or lhs <= rhs + tol
    return StabilityReport(q=q, alpha=alpha, r=r, applicable=applicable,
                           lam=lam, lq_max=lq_max, lq_bound=lq_bound,
                           lq_pass=bool(lq_pass), energy_lhs=lhs,
                           energy_rhs=rhs, energy_pass=bool(energy_pass),
                           c_r=c_r)


@dataclass
class BVReport:
    """Weak BV sums of a trajectory.

    s_time = sum_n sum_K |K| |theta_K^{n+1} - theta_K^n| (expected to grow
    like sqrt(T/k), hence the scaled variant), and
    s_space = k sum_n sum_K sum_{L~K} |K|L| |theta_K^{n+1} - theta_L^{n+1}|
    over ordered neighbour pairs (each face counted from both sides).
    """

    s_time: float
    s_time_scaled: float      # s_time * sqrt(k/T)
    s_space: float
    k: float
    T: float

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def weak_bv_monitor(traj, flux=None):
    cfg = traj.cfg
    s_time = float(traj.monitors["st_inc"].sum())
    s_space = float(cfg.k * traj.monitors["ss_inc"].sum())
    return BVReport(s_time=s_time,
                    s_time_scaled=s_time * float(np.sqrt(cfg.k / cfg.T)),
                    s_space=s_space, k=cfg.k, T=cfg.T)


def q_mean(x, y, q):
    """The q-mean ((q-1)/q) (x^q - y^q)/(x^{q-1} - y^{q-1}) for x, y > 0.

    Continuous extension at x = y; q = 2 gives the arithmetic mean.  Accepts
    arrays elementwise.  Near-equal arguments fall back to the midpoint,
    whose distance to the q-mean is at most (|q-2|/q)|x-y|/2.
    """
    q = float(q)
    if q <= 1:
        raise ValueError("q must exceed 1")
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if np.any(xa <= 0) or np.any(ya <= 0):
        raise ValueError("q_mean requires strictly positive arguments")
    scalar = xa.ndim == 0 and ya.ndim == 0
    xb, yb = np.broadcast_arrays(np.atleast_1d(xa), np.atleast_1d(ya))
    out = 0.5 * (xb + yb)
    m = np.abs(xb - yb) > 1e-8 * np.maximum(xb, yb)
    if m.any():
        num = xb[m] ** q - yb[m] ** q
        den = xb[m] ** (q - 1.0) - yb[m] ** (q - 1.0)
        out[m] = (q - 1.0) / q * num / den
    return float(out[0]) if scalar else out.reshape(np.broadcast(xa, ya).shape)


def elementary_inequality_gap(x, y, r):
    """rhs - lhs of (x-y)^2 ((x+y)/2)^{r-2} <= (x-y)(x^{r-1}-y^{r-1})/(r-1).

    Nonnegative for r in (1, 2] and x, y > 0; exposed so property sweeps can
    assert it directly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = float(r)
    if not 1.0 < r <= 2.0:
        raise ValueError("r must lie in (1, 2]")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("arguments must be positive")
    lhs = (x - y) ** 2 * (0.5 * (x + y)) ** (r - 2.0)
    rhs = (x - y) * (x ** (r - 1.0) - y ** (r - 1.0)) / (r - 1.0)
    return rhs - lhs

"""Convergence studies: test cases, reference solutions, refinement ladders.

The ladder couples the time step to the mesh as k proportional to h^2, so
the expected O(h) and O(sqrt(k)) error contributions shrink at the same
rate and a single combined slope can be fitted.  Errors are measured in the
logarithmic Kantorovich-Rubinstein distance, either with delta frozen at
the finest level's h + sqrt(k) (so levels are compared in one metric) or
with delta matched per level (the boundedness form of the estimate).

Reference solutions are exact whenever the case allows it: a separable
cosine series for pure diffusion, and closed-form isotropic Gaussians for
rigid rotation and for the linear compressive drift (whose density is the
Ornstein-Uhlenbeck evolution).  The Gaussian references are free-space
solutions; parameters are chosen so the mass within reach of the walls is
below 1e-7, and they are cross-validated against fine-grid solves in the
test suite.  Cases without a closed form use a fine-grid reference: solve
at (h/8, k/8) and aggregate cell means conservatively onto the target mesh.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .discretize import discretize_initial_datum, discretize_velocity, \
    kmax_constant_divergence
from .fields import CellField, named_field
from .mesh import Domain, build_cartesian_mesh, mesh_size
from .scheme import SchemeConfig, solve, stability_monitor, weak_bv_monitor
from .transport import kr_signed

__all__ = [
    "TestCase",
    "LadderRow",
    "LadderResult",
    "builtin_cases",
    "get_case",
    "transport_variant",
    "reference_solution",
    "run_ladder",
    "run_time_ladder",
    "emit_report",
    "read_ladder_rows",
    "sample_times",
]

_UNIT = Domain(0.0, 0.0, 1.0, 1.0)


@dataclass
class TestCase:
    """One benchmark configuration with its reference-solution recipe.

    ``reference`` is one of "exact-series", "exact-gaussian", "fine-grid",
    "particle-oracle".  ``sobolev_p`` declares the W^{1,p} regularity of the
    velocity (np.inf for Lipschitz fields); exact references are reserved
    for the rigid cases where they are genuinely exact.
    """

    name: str
    description: str
    velocity: object
    kappa: float
    T: float
    domain: Domain
    datum: object                       # pointwise f(X) -> values
    reference: str
    sobolev_p: float
    lipschitz: bool
    q: float = 2.0
    alpha: float = 2.0
    kmax: float = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kmax is None:
            self.kmax = self.T

    def datum_cells(self, mesh):
        """Exact cell averages of the datum where a closed form exists."""
        return reference_solution(self, 0.0, mesh)


def _series_axis_averages(coeffs, kappa, t, edges):
    """Exact cell means of sum_m c_m e^{-kappa pi^2 m^2 t} cos(m pi x)."""
    w = np.diff(edges)
    out = np.full(len(w), coeffs.get(0, 0.0), dtype=float)
    for m, c in coeffs.items():
        if m == 0:
            continue
        amp = c * np.exp(-kappa * np.pi ** 2 * m ** 2 * t)
        out += amp * np.diff(np.sin(m * np.pi * edges)) / (m * np.pi * w)
    return out


def _series_pointwise(coeffs, kappa, t, s):
    out = np.full_like(np.asarray(s, float), coeffs.get(0, 0.0))
    for m, c in coeffs.items():
        if m:
            out += c * np.exp(-kappa * np.pi ** 2 * m ** 2 * t) \
                * np.cos(m * np.pi * s)
    return out


def _gauss_axis_integrals(edges, c, sigma):
    """Integral of the unit 1-D Gaussian over each interval between edges."""
    z = (edges - c) / (np.sqrt(2.0) * sigma)
    return 0.5 * np.diff(erf(z))


def _gaussian_cell_values(mesh, center, sigma, mass0_frac=None):
    """Exact cell averages of the unit-mass isotropic Gaussian on a
    Cartesian mesh, renormalized so the in-domain mass stays at its t=0
    value (the free-space solution leaks a negligible tail)."""
    _, nx, ny = mesh.structure
    d = mesh.domain
    xs = np.linspace(d.x0, d.x1, nx + 1)
    ys = np.linspace(d.y0, d.y1, ny + 1)
    ix = _gauss_axis_integrals(xs, center[0], sigma)
    iy = _gauss_axis_integrals(ys, center[1], sigma)
    hx = d.width / nx
    hy = d.height / ny
    vals = (iy[:, None] * ix[None, :]).ravel() / (hx * hy)
    in_mass = ix.sum() * iy.sum()
    if mass0_frac is not None:
        vals *= mass0_frac / in_mass
    return vals


def _gaussian_pointwise(X, center, sigma):
    r2 = ((X - np.asarray(center)) ** 2).sum(axis=1)
    return np.exp(-r2 / (2 * sigma ** 2)) / (2 * np.pi * sigma ** 2)


def _domain_mass_fraction(domain, center, sigma):
    fx = _gauss_axis_integrals(np.array([domain.x0, domain.x1]),
                               center[0], sigma)[0]
    fy = _gauss_axis_integrals(np.array([domain.y0, domain.y1]),
                               center[1], sigma)[0]
    return fx * fy


def _gauss_state(case, t):
    """(center, sigma) of the exact Gaussian solution at time t."""
    p = case.params
    if case.name.startswith("rotation"):
        om = p["omega"]
        pivot = np.array(p["pivot"])
        off = np.array(p["datum_center"]) - pivot
        ca, sa = np.cos(om * t), np.sin(om * t)
        c = pivot + np.array([ca * off[0] - sa * off[1],
                              sa * off[0] + ca * off[1]])
        sigma = np.sqrt(p["width"] ** 2 + 2 * case.kappa * t)
        return c, sigma
    if case.name.startswith("compressive"):
        g = p["gamma"]
        pivot = np.array(p["pivot"])
        c = pivot + np.exp(-g * t) * (np.array(p["datum_center"]) - pivot)
        w2 = p["width"] ** 2
        if case.kappa > 0:
            s2 = case.kappa / g + (w2 - case.kappa / g) * np.exp(-2 * g * t)
        else:
            s2 = w2 * np.exp(-2 * g * t)
        return c, np.sqrt(s2)
    raise ValueError(f"no Gaussian solution recipe for case {case.name!r}")


def builtin_cases():
    """The four benchmark configurations.

    (a) pure diffusion with a separable cosine datum (exact series);
    (b) rigid rotation plus diffusion of a narrow Gaussian (exact rotating
        Gaussian, Lipschitz velocity);
    (c) rough radial vortex, W^{1,p} for p < 4 only (fine-grid reference);
    (d) compressive linear drift with divergence -2*gamma, which makes the
        growth factor and the time-step ceiling active (exact
        Ornstein-Uhlenbeck Gaussian).
    """
    cases = []

    series = {0: 1.0, 1: 0.6, 2: 0.3}
    cases.append(TestCase(
        name="diffusion-series",
        description="pure diffusion, separable positive cosine datum",
        velocity=named_field("zero"),
        kappa=0.02, T=0.5, domain=_UNIT,
        datum=lambda X, c=series: (_series_pointwise(c, 0, 0, X[:, 0])
                                   * _series_pointwise(c, 0, 0, X[:, 1])),
        reference="exact-series", sobolev_p=np.inf, lipschitz=True,
        params={"series": series},
    ))

    rot = dict(omega=0.5 * np.pi, pivot=(0.5, 0.5),
               datum_center=(0.7, 0.5), width=0.015)
    cases.append(TestCase(
        name="rotation-diffusion",
        description="rigid rotation + diffusion of a narrow Gaussian bump",
        velocity=named_field("rotation", omega=rot["omega"],
                             cx=rot["pivot"][0], cy=rot["pivot"][1]),
        kappa=0.005, T=0.5, domain=_UNIT,
        datum=lambda X, p=rot: _gaussian_pointwise(
            X, p["datum_center"], p["width"]),
        reference="exact-gaussian", sobolev_p=np.inf, lipschitz=True,
        params=rot,
    ))

    beta = 0.5
    cases.append(TestCase(
        name="rough-vortex",
        description="radial vortex with speed min(r^b/b, cap): "
                    "divergence-free, bounded, not Lipschitz",
        velocity=named_field("rough_vortex", beta=beta, cap=1.0,
                             cx=0.5, cy=0.5),
        kappa=0.005, T=0.25, domain=_UNIT,
        datum=lambda X: _gaussian_pointwise(X, (0.65, 0.5), 0.05),
        reference="fine-grid", sobolev_p=2.0 / (1.0 - beta), lipschitz=False,
        params={"beta": beta, "cap": 1.0,
                "datum_center": (0.65, 0.5), "width": 0.05},
    ))

    gam = 4.0
    comp = dict(gamma=gam, pivot=(0.5, 0.5),
                datum_center=(0.58, 0.46), width=0.06)
    cases.append(TestCase(
        name="compressive",
        description="linear inward drift, constant divergence -2*gamma",
        velocity=named_field("compressive", gamma=gam, cx=0.5, cy=0.5),
        kappa=0.005, T=0.5, domain=_UNIT,
        datum=lambda X, p=comp: _gaussian_pointwise(
            X, p["datum_center"], p["width"]),
        reference="exact-gaussian", sobolev_p=np.inf, lipschitz=True,
        q=1.5, alpha=2.0,
        kmax=kmax_constant_divergence(2 * gam, 1.5, 2.0, 0.5),
        params=comp,
    ))
    return cases


def get_case(name):
    for c in builtin_cases():
        if c.name == name:
            return c
    raise ValueError(f"unknown case {name!r}; have "
                     f"{[c.name for c in builtin_cases()]}")


def transport_variant(case):
    """The kappa = 0 twin of a case (pure transport, reference unspread)."""
    import copy
    out = copy.copy(case)
    out.name = case.name + "-transport"
    out.kappa = 0.0
    out.params = dict(case.params)
    return out


# fine-grid references already computed this session, keyed by
# (case name, target nx, target ny, k, factor)
_FINE_CACHE = {}


def _fine_grid_fields(case, target_mesh, k, times, factor=8):
    _, nx, ny = target_mesh.structure
    key = (case.name, nx, ny, float(k), factor)
    have = _FINE_CACHE.get(key, {})
    missing = [t for t in times if t not in have]
    if missing:
        fine = build_cartesian_mesh(case.domain, nx * factor, ny * factor)
        theta0 = CellField(fine, _datum_values(case, fine))
        kf = k / factor
        flux = discretize_velocity(case.velocity, fine, kf, case.T)
        cfg = SchemeConfig(kappa=case.kappa, k=kf, T=case.T,
                           q=case.q, alpha=case.alpha, kmax=case.kmax)
        traj = solve(theta0, flux, cfg, store="snapshots",
                     snapshot_times=sorted(set(missing)))
        for t in missing:
            v = traj.field_at_step(int(round(t / kf))).values
            agg = v.reshape(ny, factor, nx, factor).mean(axis=(1, 3))
            have[t] = agg.ravel()
        _FINE_CACHE[key] = have
    return {t: have[t] for t in times}


def _reference_values(case, t, mesh):
    if case.reference == "exact-series" or (t == 0.0 and case.name.startswith(
            "diffusion")):
        coeffs = case.params["series"]
        _, nx, ny = mesh.structure
        d = mesh.domain
        gx = _series_axis_averages(coeffs, case.kappa, t,
                                   np.linspace(d.x0, d.x1, nx + 1))
        gy = _series_axis_averages(coeffs, case.kappa, t,
                                   np.linspace(d.y0, d.y1, ny + 1))
        return (gy[:, None] * gx[None, :]).ravel()
    if case.reference == "exact-gaussian":
        c0, s0 = _gauss_state(case, 0.0)
        ct, st = _gauss_state(case, t)
        frac0 = _domain_mass_fraction(case.domain, c0, s0)
        return _gaussian_cell_values(mesh, ct, st, mass0_frac=frac0)
    raise ValueError(f"no direct reference for kind {case.reference!r}")


def reference_solution(case, t, target_mesh, k=None, factor=8):
    """Reference cell field for ``case`` at time ``t`` on ``target_mesh``.

    Exact kinds are evaluated in closed form (Cartesian meshes; other
    meshes fall back to quadrature of the pointwise solution).  The
    fine-grid kind needs the run's time step ``k``: it solves at
    (h/factor, k/factor) and aggregates cell means exactly.
    """
    if not (0.0 <= t <= case.T + 1e-12):
        raise ValueError(f"time {t} outside [0, {case.T}]")
    if case.reference in ("exact-series", "exact-gaussian"):
        if target_mesh.structure and target_mesh.structure[0] == "cartesian":
            return CellField(target_mesh,
                             _reference_values(case, t, target_mesh))
        if t == 0.0:
            return discretize_initial_datum(case.datum, target_mesh,
                                            quad_order=6)
        raise ValueError("exact references need a Cartesian target mesh "
                         "for t > 0")
    if case.reference == "fine-grid":
        if t == 0.0:
            return CellField(target_mesh,
                             _fine_t0_values(case, target_mesh, factor))
        if k is None:
            raise ValueError("fine-grid reference needs the run's time "
                             "step k")
        vals = _fine_grid_fields(case, target_mesh, k, [t], factor)[t]
        return CellField(target_mesh, vals)
    if case.reference == "particle-oracle":
        from .lagrangian import histogram, simulate
        p = case.params
        theta0 = case.datum_cells(target_mesh)
        ens = simulate(theta0, case.velocity, case.kappa, t,
                       p.get("dt", case.T / 256),
                       p.get("n_particles", 100000), p.get("seed", 0))
        return histogram(ens, target_mesh, theta0.mass())
    raise ValueError(f"unsupported reference kind {case.reference!r}")


def _fine_t0_values(case, target_mesh, factor):
    """t = 0 on the fine path: datum averages aggregated, so the reference
    matches the ladder's own initial data construction."""
    _, nx, ny = target_mesh.structure
    fine = build_cartesian_mesh(case.domain, nx * factor, ny * factor)
    v = _datum_values(case, fine)
    return v.reshape(ny, factor, nx, factor).mean(axis=(1, 3)).ravel()


def _datum_values(case, mesh):
    if case.reference in ("exact-series", "exact-gaussian"):
        return _reference_values(case, 0.0, mesh)
    if "width" in case.params and "datum_center" in case.params:
        c0 = np.asarray(case.params["datum_center"])
        s0 = case.params["width"]
        frac = _domain_mass_fraction(case.domain, c0, s0)
        return _gaussian_cell_values(mesh, c0, s0, mass0_frac=frac)
    return discretize_initial_datum(case.datum, mesh, quad_order=4).values


def sample_times(T, n=5):
    """The sampled grid times of a ladder: 0, T/4, ..., T."""
    return [i * T / (n - 1) for i in range(n)]


@dataclass
class LadderRow:
    level: int
    h: float
    k: float
    delta: float
    error: float
    runtime_s: float


@dataclass
class LadderResult:
    """Rows plus fitted exponents.

    ``rate_h`` is the least-squares slope of log(error) against log(h)
    (space ladders; with k coupled to h^2 the k-exponent is half of it);
    ``rate_k`` against log(k) for time ladders.
    """

    case_name: str
    kind: str                      # "space" | "time"
    delta_policy: str
    coupling: float
    rows: list
    rate_h: float
    rate_k: float
    r2: float
    errors_by_time: list = field(default_factory=list, repr=False)
    stability: list = field(default_factory=list, repr=False)
    bv: list = field(default_factory=list, repr=False)


def _threads():
    try:
        return max(1, int(os.environ.get("FVKR_THREADS", "1")))
    except ValueError:
        return 1


def _fit_loglog(x, y):
    lx = np.log(np.asarray(x))
    ly = np.log(np.asarray(y))
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_res = ((ly - pred) ** 2).sum()
    ss_tot = ((ly - ly.mean()) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(r2)


def _steps_for(T, k_target):
    n = max(1, int(round(T / k_target)))
    # sample times sit at quarters of the horizon; keep them on the grid
    n = 4 * max(1, int(round(n / 4)))
    return n


def _one_level(case, n, k, delta, times, engine, ppc, prune=0.0):
    t0 = time.perf_counter()
    mesh = build_cartesian_mesh(case.domain, n, n)
    theta0 = CellField(mesh, _datum_values(case, mesh))
    flux = discretize_velocity(case.velocity, mesh, k, case.T)
    cfg = SchemeConfig(kappa=case.kappa, k=k, T=case.T,
                       q=case.q, alpha=case.alpha, kmax=case.kmax)
    traj = solve(theta0, flux, cfg, store="snapshots", snapshot_times=times)
    errs = {}
    for t in times:
        ref = reference_solution(case, t, mesh, k=k)
        sol = traj.field_at_step(int(round(t / k)))
        errs[t] = kr_signed(ref, sol, delta, points_per_cell=ppc,
                            engine=engine, prune=prune).value
    stab = {qq: stability_monitor(traj, flux, q=qq)
            for qq in sorted({1.5, 2.0, float(case.q)})}
    bv = weak_bv_monitor(traj)
    return errs, stab, bv, time.perf_counter() - t0


def run_ladder(case, levels=4, coupling=1.0, delta_policy="fixed",
               base_n=16, engine="network-simplex", points_per_cell=1,
               prune=0.0):
    """Space ladder: n doubles per level, k follows coupling * (1/n)^2.

    Error per level is the max of D_delta(reference, solution) over the five
    sampled grid times.  ``delta_policy`` "fixed" freezes delta at the
    finest level's h + sqrt(k); "matched" uses each level's own h + sqrt(k).
    ``prune`` drops that relative mass fraction of the smallest atoms before
    each transport solve; the induced error is bounded by the pruned mass
    times the cost diameter, so ~1e-9 is invisible at ladder scale but cuts
    the LP size sharply for localized profiles.
    """
    if levels < 3:
        raise ValueError("need at least 3 levels for a rate fit")
    if delta_policy not in ("fixed", "matched"):
        raise ValueError("delta_policy must be 'fixed' or 'matched'")
    ns = [base_n * 2 ** l for l in range(levels)]
    ks = []
    hs = []
    for n in ns:
        w = case.domain.width / n
        steps = _steps_for(case.T, coupling * w * w)
        k = case.T / steps
        if k > case.kmax * (1 + 1e-12):
            raise ValueError(
                f"level {ns.index(n)}: time step {k} exceeds k_max = "
                f"{case.kmax} for case {case.name!r}")
        ks.append(k)
        hs.append(w * np.sqrt(2.0))     # cell diameter on the square grid
    deltas = [hs[-1] + np.sqrt(ks[-1])] * levels if delta_policy == "fixed" \
        else [hs[l] + np.sqrt(ks[l]) for l in range(levels)]
    times = sample_times(case.T)

    results = [None] * levels
    workers = min(_threads(), levels)

    def job(l):
        return _one_level(case, ns[l], ks[l], deltas[l], times, engine,
                          points_per_cell, prune)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for l, res in enumerate(ex.map(job, range(levels))):
                results[l] = res
    else:
        for l in range(levels):
            results[l] = job(l)

    rows = []
    errors_by_time = []
    stab_all = []
    bv_all = []
    for l, (errs, stab, bv, rt) in enumerate(results):
        rows.append(LadderRow(level=l, h=hs[l], k=ks[l], delta=deltas[l],
                              error=max(errs.values()), runtime_s=rt))
        errors_by_time.append(errs)
        stab_all.append(stab)
        bv_all.append(bv)
    rate_h, r2 = _fit_loglog([r.h for r in rows], [r.error for r in rows])
    return LadderResult(case_name=case.name, kind="space",
                        delta_policy=delta_policy, coupling=coupling,
                        rows=rows, rate_h=rate_h, rate_k=rate_h / 2.0, r2=r2,
                        errors_by_time=errors_by_time, stability=stab_all,
                        bv=bv_all)


def run_time_ladder(case, levels=4, fixed_n=64, k0=None,
                    engine="network-simplex", points_per_cell=1,
                    delta_policy="fixed", prune=0.0):
    """Time ladder: h fixed and fine, k halved per level, slope vs log k."""
    if levels < 3:
        raise ValueError("need at least 3 levels for a rate fit")
    w = case.domain.width / fixed_n
    h = w * np.sqrt(2.0)
    k0 = case.T / 4 if k0 is None else k0
    ks = []
    for l in range(levels):
        steps = _steps_for(case.T, k0 / 2 ** l)
        k = case.T / steps
        if k > case.kmax * (1 + 1e-12):
            raise ValueError(
                f"level {l}: time step {k} exceeds k_max = {case.kmax} "
                f"for case {case.name!r}")
        ks.append(k)
    deltas = [h + np.sqrt(ks[-1])] * levels if delta_policy == "fixed" \
        else [h + np.sqrt(k) for k in ks]
    times = sample_times(case.T)

    rows = []
    errors_by_time = []
    stab_all = []
    bv_all = []
    for l in range(levels):
        errs, stab, bv, rt = _one_level(case, fixed_n, ks[l], deltas[l],
                                        times, engine, points_per_cell, prune)
        rows.append(LadderRow(level=l, h=h, k=ks[l], delta=deltas[l],
                              error=max(errs.values()), runtime_s=rt))
        errors_by_time.append(errs)
        stab_all.append(stab)
        bv_all.append(bv)
    rate_k, r2 = _fit_loglog([r.k for r in rows], [r.error for r in rows])
    return LadderResult(case_name=case.name, kind="time",
                        delta_policy=delta_policy, coupling=float("nan"),
                        rows=rows, rate_h=float("nan"), rate_k=rate_k, r2=r2,
                        errors_by_time=errors_by_time, stability=stab_all,
                        bv=bv_all)


def emit_report(result, out_dir, stem=None):
    """Write ``<stem>.csv`` (one row per level) and ``<stem>.json`` (fit)."""
    if not result.rows:
        raise ValueError("empty ladder result")
    stem = stem or f"{result.case_name}-{result.kind}"
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, stem + ".csv")
    json_path = os.path.join(out_dir, stem + ".json")
    with open(csv_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["level", "h", "k", "delta", "error", "runtime_s"])
        for r in result.rows:
            wr.writerow([r.level, repr(float(r.h)), repr(float(r.k)),
                         repr(float(r.delta)), repr(float(r.error)),
                         repr(float(r.runtime_s))])
    def _num(x):
        return None if x is None or not np.isfinite(x) else float(x)

    fit = {
        "case": result.case_name,
        "kind": result.kind,
        "delta_policy": result.delta_policy,
        "coupling": _num(result.coupling),
        "rate_h": _num(result.rate_h),
        "rate_k": _num(result.rate_k),
        "r2": _num(result.r2),
    }
    with open(json_path, "w") as f:
        json.dump(fit, f, indent=2)
    return csv_path, json_path


def read_ladder_rows(csv_path):
    """Parse an emitted CSV back into LadderRow objects (round-trip exact)."""
    rows = []
    with open(csv_path, newline="") as f:
        rd = csv.DictReader(f)
        for rec in rd:
            rows.append(LadderRow(level=int(rec["level"]),
                                  h=float(rec["h"]), k=float(rec["k"]),
                                  delta=float(rec["delta"]),
                                  error=float(rec["error"]),
                                  runtime_s=float(rec["runtime_s"])))
    return rows

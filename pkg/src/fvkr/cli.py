"""Command-line access to the library: mesh checks, solves, distances,
particle runs and convergence ladders.

Subcommands mirror the library API one-to-one; a TOML config file can
replace the flags of ``converge`` (flags win over file values).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # python < 3.11
    import tomli as tomllib

from .discretize import compute_kmax, discretize_initial_datum, \
    discretize_velocity
from .fields import CellField, named_field
from .harness import emit_report, get_case, run_ladder, run_time_ladder, \
    transport_variant
from .mesh import Domain, build_cartesian_mesh, mesh_size, read_mesh, \
    validate_admissibility
from .scheme import SchemeConfig, solve, stability_monitor, weak_bv_monitor
from .transport import dual_certify, kr_signed


def _load_mesh(spec):
    """A mesh file path, or ``cartesian:nx,ny`` on the unit square."""
    if spec.startswith("cartesian:"):
        try:
            nx, ny = (int(s) for s in spec.split(":", 1)[1].split(","))
        except ValueError:
            raise SystemExit(f"bad mesh spec {spec!r}; "
                             "expected cartesian:nx,ny")
        return build_cartesian_mesh(Domain(0, 0, 1, 1), nx, ny)
    return read_mesh(spec)


def _parse_params(text):
    out = {}
    if not text:
        return out
    for item in text.split(","):
        key, _, val = item.partition("=")
        if not _:
            raise SystemExit(f"bad field parameter {item!r}; expected k=v")
        out[key.strip()] = float(val)
    return out


def _load_datum(spec, mesh):
    """A cell-value CSV, ``gaussian:cx,cy,width``, or ``uniform``."""
    if spec == "uniform":
        return CellField(mesh, np.ones(mesh.n_cells))
    if spec.startswith("gaussian:"):
        try:
            cx, cy, w = (float(s) for s in spec.split(":", 1)[1].split(","))
        except ValueError:
            raise SystemExit(f"bad datum spec {spec!r}; "
                             "expected gaussian:cx,cy,width")

        def f(X):
            r2 = (X[:, 0] - cx) ** 2 + (X[:, 1] - cy) ** 2
            return np.exp(-r2 / (2 * w * w)) / (2 * np.pi * w * w)

        if mesh.cell_polygons is None:
            vals = f(mesh.cell_points)
            return CellField(mesh, vals)
        return discretize_initial_datum(f, mesh, quad_order=4)
    return CellField.from_csv(mesh, spec)


def _cmd_validate_mesh(args):
    mesh = read_mesh(args.mesh)
    report = validate_admissibility(mesh, tol_orth=args.tol_orth)
    payload = report.to_dict()
    payload["mesh_size"] = mesh_size(mesh)
    json.dump(payload, sys.stdout, indent=2, default=float)
    print()
    return 0 if report.ok else 1


def _cmd_solve(args):
    mesh = _load_mesh(args.mesh)
    u = named_field(args.field, **_parse_params(args.field_params))
    theta0 = _load_datum(args.datum, mesh)
    k = args.T / args.steps
    kmax = None if args.force else compute_kmax(u, args.q, args.alpha,
                                                args.T, domain=mesh.domain)
    cfg = SchemeConfig(kappa=args.kappa, k=k, T=args.T, q=args.q,
                       alpha=args.alpha, kmax=kmax, force=args.force)
    flux = discretize_velocity(u, mesh, k, args.T)
    traj = solve(theta0, flux, cfg, store="snapshots")
    with open(args.out, "w") as f:
        f.write("n,t,cell_id,value\n")
        for n in traj.stored_steps:
            th = traj.field_at_step(int(n))
            t = float(n * k)
            for cid, v in enumerate(th.values):
                f.write(f"{int(n)},{t!r},{cid},{float(v)!r}\n")
    stab = stability_monitor(traj, flux)
    bv = weak_bv_monitor(traj)
    monitors = {
        "mass": traj.monitors["mass"].tolist(),
        "min": traj.monitors["min"].tolist(),
        "lq_norm": traj.monitors["lq"][float(args.q)].tolist(),
        "bv_time": bv.s_time_scaled,
        "bv_space": bv.s_space,
        "stability_pass": bool(stab.lq_pass and stab.energy_pass),
    }
    with open(args.out + ".monitors.json", "w") as f:
        json.dump(monitors, f, indent=2)
    print(f"wrote {args.out} and {args.out}.monitors.json")
    return 0


def _cmd_kr(args):
    mesh = _load_mesh(args.mesh)
    fa = CellField.from_csv(mesh, args.a)
    fb = CellField.from_csv(mesh, args.b)
    res = kr_signed(fa, fb, args.delta, points_per_cell=args.ppc)
    out = {
        "distance": res.value,
        "delta": res.delta,
        "gap": res.gap,
        "atoms_a": int(len(res.weights_source)),
        "atoms_b": int(len(res.weights_target)),
    }
    if args.dual:
        rep = dual_certify(res)
        out["certificate"] = rep.to_dict()
    json.dump(out, sys.stdout, indent=2)
    print()
    return 0


def _cmd_particles(args):
    from .lagrangian import histogram, simulate
    mesh = _load_mesh(args.mesh)
    u = named_field(args.field, **_parse_params(args.field_params))
    theta0 = _load_datum(args.datum, mesh)
    ens = simulate(theta0, u, args.kappa, args.T, args.dt, args.n,
                   args.seed)
    hist = histogram(ens, mesh, theta0.mass())
    hist.to_csv(args.out)
    print(f"wrote {args.out} ({ens.n_particles} particles, "
          f"max local time {ens.local_time.max():.3g})")
    return 0


def _cmd_converge(args):
    if args.config:
        with open(args.config, "rb") as f:
            conf = tomllib.load(f)
        # flags win; config fills whatever was left unset
        for key in ("case", "levels", "coupling", "delta", "out",
                    "base_n", "fixed_n", "kappa_zero"):
            if getattr(args, key, None) is None and key in conf:
                setattr(args, key, conf[key])
    missing = [k for k in ("case", "out") if not getattr(args, k)]
    if missing:
        raise SystemExit(f"missing required options: {', '.join(missing)}")
    case = get_case(args.case)
    if args.kappa_zero:
        case = transport_variant(case)
    levels = args.levels or 4
    if args.coupling == "fixed-k":
        res = run_time_ladder(case, levels=levels,
                              fixed_n=args.fixed_n or 64,
                              delta_policy=args.delta or "fixed")
    else:
        res = run_ladder(case, levels=levels, base_n=args.base_n or 16,
                         delta_policy=args.delta or "fixed")
    csv_path, json_path = emit_report(res, args.out)
    rate = res.rate_k if res.kind == "time" else res.rate_h
    print(f"{case.name}: fitted rate {rate:.3f} (r2 {res.r2:.4f})")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="fvkr",
        description="implicit upwind finite volumes with "
                    "Kantorovich-Rubinstein verification")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate-mesh", help="admissibility report (JSON)")
    v.add_argument("mesh")
    v.add_argument("--tol-orth", type=float, default=1e-9)
    v.set_defaults(func=_cmd_validate_mesh)

    s = sub.add_parser("solve", help="run the scheme, write snapshots")
    s.add_argument("--mesh", required=True,
                   help="mesh file or cartesian:nx,ny")
    s.add_argument("--field", required=True)
    s.add_argument("--field-params", default="",
                   help="comma-separated k=v pairs for the field")
    s.add_argument("--datum", default="uniform",
                   help="cell CSV, gaussian:cx,cy,w, or 'uniform'")
    s.add_argument("--kappa", type=float, required=True)
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--q", type=float, default=2.0)
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--force", action="store_true",
                   help="skip the k <= k_max gate")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_solve)

    k = sub.add_parser("kr", help="distance between two cell fields")
    k.add_argument("--a", required=True)
    k.add_argument("--b", required=True)
    k.add_argument("--mesh", required=True)
    k.add_argument("--delta", type=float, required=True)
    k.add_argument("--ppc", type=int, default=1, choices=(1, 4, 9))
    k.add_argument("--dual", action="store_true",
                   help="attach the c-transform certificate")
    k.set_defaults(func=_cmd_kr)

    pa = sub.add_parser("particles", help="reflected particle oracle")
    pa.add_argument("--mesh", required=True)
    pa.add_argument("--field", required=True)
    pa.add_argument("--field-params", default="")
    pa.add_argument("--datum", default="uniform")
    pa.add_argument("--kappa", type=float, required=True)
    pa.add_argument("--T", type=float, required=True)
    pa.add_argument("--dt", type=float, required=True)
    pa.add_argument("--n", type=int, required=True)
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--out", required=True)
    pa.set_defaults(func=_cmd_particles)

    c = sub.add_parser("converge", help="refinement-ladder study")
    c.add_argument("--case")
    c.add_argument("--levels", type=int)
    c.add_argument("--coupling", choices=("h2", "fixed-k"), default=None,
                   help="h2 (default): k follows h^2 as the mesh refines; "
                        "fixed-k: hold the (fine) mesh and halve k")
    c.add_argument("--delta", choices=("fixed", "matched"))
    c.add_argument("--base-n", type=int, dest="base_n")
    c.add_argument("--fixed-n", type=int, dest="fixed_n")
    c.add_argument("--kappa-zero", action="store_const", const=True,
                   default=None, dest="kappa_zero",
                   help="run the pure-transport variant of the case")
    c.add_argument("--out")
    c.add_argument("--config", help="TOML file mirroring these flags")
    c.set_defaults(func=_cmd_converge)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

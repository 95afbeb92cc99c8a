"""Solver tests: assembly structure, conservation, monotonicity, stability.

The dense-solve comparison on a tiny mesh is the independent route for the
implicit step; the upwind/symmetric assembly comparison checks the flux-split
identity at matrix level.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fvkr import (
    CellField,
    Domain,
    SchemeConfig,
    assemble_step,
    build_cartesian_mesh,
    compute_kmax,
    discretize_initial_datum,
    discretize_velocity,
    elementary_inequality_gap,
    interpolant_at,
    named_field,
    q_mean,
    solve,
    stability_monitor,
    weak_bv_monitor,
)

UNIT = Domain(0.0, 0.0, 1.0, 1.0)


def _setup(n=8, k=0.025, T=0.1, kappa=0.01, field=None, **cfgkw):
    mesh = build_cartesian_mesh(UNIT, n, n)
    u = field if field is not None else named_field("rotation", omega=1.0)
    flux = discretize_velocity(u, mesh, k, T)
    cfg = SchemeConfig(kappa=kappa, k=k, T=T, **cfgkw)
    return mesh, flux, cfg


def _bump(mesh, c=(0.6, 0.5), w=0.1):
    return discretize_initial_datum(
        lambda X: np.exp(-((X[:, 0] - c[0]) ** 2 + (X[:, 1] - c[1]) ** 2)
                         / (2 * w * w)), mesh)


class TestAssembly:
    def test_m_matrix_structure(self):
        mesh, flux, cfg = _setup()
        sys = assemble_step(mesh, flux, cfg, 0)
        A = sys.A
        d = A.diagonal()
        assert (d > 0).all()
        assert sys.offdiag_max <= 1e-14 * d.max()

    def test_conservation_column_identity(self):
        # mass conservation is the algebraic identity A^T vol = vol / k
        mesh, flux, cfg = _setup(kappa=0.03)
        sys = assemble_step(mesh, flux, cfg, 0)
        vol = mesh.cell_volumes
        resid = np.abs(sys.A.T @ vol - vol / cfg.k).max()
        assert resid <= 1e-11 / cfg.k

    def test_upwind_symmetric_identical(self):
        # the positive/negative split and the central + |u| form must agree
        # to rounding; this is the assembled form of u^± = (|u| ± u)/2
        mesh, flux, cfg = _setup(n=12, kappa=0.004)
        A1 = assemble_step(mesh, flux, cfg, 0, form="upwind").A
        A2 = assemble_step(mesh, flux, cfg, 0, form="symmetric").A
        diff = np.abs((A1 - A2).toarray()).max()
        assert diff <= 1e-14 * np.abs(A1.toarray()).max()

    def test_bad_form_and_slab_index(self):
        mesh, flux, cfg = _setup()
        with pytest.raises(ValueError, match="assembly form"):
            assemble_step(mesh, flux, cfg, 0, form="petrov")
        with pytest.raises(IndexError):
            assemble_step(mesh, flux, cfg, flux.n_steps)


class TestConfig:
    def test_non_integer_horizon_rejected(self):
        with pytest.raises(ValueError, match="not an integer"):
            SchemeConfig(kappa=0.1, k=0.03, T=0.1)

    def test_kmax_gate(self):
        with pytest.raises(ValueError, match="exceeds kmax"):
            SchemeConfig(kappa=0.1, k=0.05, T=0.1, kmax=0.04)
        cfg = SchemeConfig(kappa=0.1, k=0.05, T=0.1, kmax=0.04, force=True)
        assert cfg.n_steps == 2

    def test_parameter_domains(self):
        with pytest.raises(ValueError):
            SchemeConfig(kappa=-0.1, k=0.05, T=0.1)
        with pytest.raises(ValueError):
            SchemeConfig(kappa=0.1, k=0.05, T=0.1, q=1.0)
        with pytest.raises(ValueError):
            SchemeConfig(kappa=0.1, k=0.05, T=0.1, alpha=0.5)


class TestSolve:
    def test_dense_oracle_tiny_mesh(self):
        # one implicit step vs a dense LU solve of the same matrix
        mesh, flux, cfg = _setup(n=3, k=0.05, T=0.05, kappa=0.02)
        theta0 = _bump(mesh)
        sys = assemble_step(mesh, flux, cfg, 0)
        expect = np.linalg.solve(sys.A.toarray(), theta0.values / cfg.k)
        traj = solve(theta0, flux, cfg)
        got = traj.final.values
        assert np.abs(got - expect).max() <= 1e-12 * np.abs(expect).max()

    def test_mass_conserved_and_nonnegative(self):
        mesh, flux, cfg = _setup(n=16, k=0.0125, T=0.2, kappa=0.005)
        theta0 = _bump(mesh, w=0.05)
        traj = solve(theta0, flux, cfg)
        assert traj.mass_drift() <= 1e-12
        assert traj.min_value() >= -1e-13

    def test_pure_diffusion_preserves_constants(self):
        mesh, flux, cfg = _setup(field=named_field("zero"), kappa=0.05)
        theta0 = CellField(mesh, np.full(mesh.n_cells, 0.7))
        traj = solve(theta0, flux, cfg)
        for f in traj.fields:
            assert np.abs(f.values - 0.7).max() <= 1e-13

    def test_comparison_principle(self):
        # theta0 <= phi0 pointwise implies theta^n <= phi^n for all n
        mesh, flux, cfg = _setup(n=10, kappa=0.003)
        lo = _bump(mesh, w=0.08)
        hi = CellField(mesh, lo.values + 0.2)
        t1 = solve(lo, flux, cfg)
        t2 = solve(hi, flux, cfg)
        for f1, f2 in zip(t1.fields, t2.fields):
            assert (f2.values - f1.values).min() >= -1e-13

    def test_snapshot_store_matches_full_store(self):
        mesh, flux, cfg = _setup(n=6, k=0.01, T=0.1)
        theta0 = _bump(mesh)
        full = solve(theta0, flux, cfg, store="all")
        snap = solve(theta0, flux, cfg, store="snapshots",
                     snapshot_times=[0.0, 0.05, 0.1])
        for s in snap.stored_steps:
            np.testing.assert_array_equal(snap.field_at_step(s).values,
                                          full.field_at_step(s).values)
        with pytest.raises(KeyError):
            snap.field_at_step(3)

    def test_mismatched_flux_config_rejected(self):
        mesh, flux, _ = _setup(k=0.025, T=0.1)
        theta0 = _bump(mesh)
        bad = SchemeConfig(kappa=0.01, k=0.05, T=0.1)
        with pytest.raises(ValueError, match="does not match"):
            solve(theta0, flux, bad)

    def test_interpolant(self):
        mesh, flux, cfg = _setup(n=6, k=0.025, T=0.1)
        theta0 = _bump(mesh)
        traj = solve(theta0, flux, cfg)
        np.testing.assert_array_equal(interpolant_at(traj, 0.0).values,
                                      traj.initial.values)
        mid = interpolant_at(traj, 0.0375).values     # halfway between 1 and 2
        expect = 0.5 * (traj.field_at_step(1).values
                        + traj.field_at_step(2).values)
        assert np.abs(mid - expect).max() <= 1e-12
        with pytest.raises(ValueError):
            interpolant_at(traj, 0.2)


class TestStability:
    def test_bound_holds_on_compressive_case(self):
        # compressive drift has genuinely negative divergence, so the
        # Lambda factor is active rather than trivially 1
        u = named_field("compressive", gamma=2.0)
        kmax = compute_kmax(u, 1.5, 2.0, 0.1, domain=UNIT)
        mesh, flux, cfg = _setup(n=10, k=0.025, T=0.1, kappa=0.01, field=u,
                                 q=1.5, kmax=kmax)
        theta0 = _bump(mesh)
        traj = solve(theta0, flux, cfg)
        for q in (1.5, 2.0):
            rep = stability_monitor(traj, flux, q=q)
            assert rep.applicable
            assert rep.lam >= 1.0
            assert rep.lq_pass, (rep.lq_max, rep.lq_bound)
            assert rep.energy_pass, (rep.energy_lhs, rep.energy_rhs)

    def test_signed_data_marked_inapplicable(self):
        mesh, flux, cfg = _setup(n=6)
        theta0 = CellField(mesh, np.linspace(-1, 1, mesh.n_cells))
        traj = solve(theta0, flux, cfg)
        rep = stability_monitor(traj, flux)
        assert not rep.applicable
        assert rep.lq_pass and rep.energy_pass

    def test_untracked_q_needs_full_store(self):
        mesh, flux, cfg = _setup(n=6)
        theta0 = _bump(mesh)
        full = solve(theta0, flux, cfg, store="all")
        assert stability_monitor(full, flux, q=3.0).lq_max > 0
        snap = solve(theta0, flux, cfg, store="snapshots")
        with pytest.raises(ValueError, match="not tracked"):
            stability_monitor(snap, flux, q=3.0)


class TestWeakBV:
    def test_report_identities(self):
        mesh, flux, cfg = _setup(n=12, kappa=0.004)
        theta0 = _bump(mesh, w=0.06)
        traj = solve(theta0, flux, cfg)
        rep = weak_bv_monitor(traj)
        assert rep.s_time > 0 and rep.s_space > 0
        assert abs(rep.s_time_scaled
                   - rep.s_time * np.sqrt(cfg.k / cfg.T)) <= 1e-15
        assert abs(rep.s_time - traj.monitors["st_inc"].sum()) <= 1e-15
        assert abs(rep.s_space
                   - cfg.k * traj.monitors["ss_inc"].sum()) <= 1e-15


class TestQMean:
    def test_arithmetic_at_q2(self):
        assert q_mean(3.0, 5.0, 2.0) == pytest.approx(4.0, abs=1e-14)

    def test_equal_arguments(self):
        assert q_mean(2.5, 2.5, 1.7) == pytest.approx(2.5, abs=1e-14)

    def test_defining_identity(self):
        # Theta_q (x^{q-1} - y^{q-1}) = ((q-1)/q)(x^q - y^q)
        rng = np.random.default_rng(11)
        x = rng.uniform(0.1, 10, 200)
        y = rng.uniform(0.1, 10, 200)
        for q in (1.3, 1.5, 2.0, 2.7):
            th = q_mean(x, y, q)
            lhs = th * (x ** (q - 1) - y ** (q - 1))
            rhs = (q - 1) / q * (x ** q - y ** q)
            assert np.abs(lhs - rhs).max() <= 1e-8 * np.abs(rhs).max()

    def test_positive_arguments_required(self):
        with pytest.raises(ValueError):
            q_mean(-1.0, 2.0, 1.5)
        with pytest.raises(ValueError):
            q_mean(1.0, 2.0, 1.0)

    @settings(max_examples=200, deadline=None)
    @given(x=st.floats(1e-3, 1e3), y=st.floats(1e-3, 1e3),
           q=st.floats(1.05, 4.0))
    def test_between_min_and_max(self, x, y, q):
        th = q_mean(x, y, q)
        lo, hi = min(x, y), max(x, y)
        assert lo - 1e-9 * hi <= th <= hi + 1e-9 * hi


class TestElementaryInequality:
    @settings(max_examples=300, deadline=None)
    @given(x=st.floats(1e-4, 1e4), y=st.floats(1e-4, 1e4),
           r=st.floats(1.01, 2.0))
    def test_gap_nonnegative(self, x, y, r):
        gap = elementary_inequality_gap(x, y, r)
        scale = max(abs(x), abs(y)) ** r
        assert gap >= -1e-10 * scale

    def test_equality_at_r2(self):
        # at r = 2 both sides are (x - y)^2
        assert elementary_inequality_gap(3.0, 1.0, 2.0) == pytest.approx(
            0.0, abs=1e-12)

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            elementary_inequality_gap(1.0, 1.0, 2.5)
        with pytest.raises(ValueError):
            elementary_inequality_gap(0.0, 1.0, 1.5)

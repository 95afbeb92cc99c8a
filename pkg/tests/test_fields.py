"""Cell fields, velocity catalog, and CSV interchange."""

import io

import numpy as np
import pytest

from fvkr.fields import CellField, named_field, velocity_from_csv
from fvkr.mesh import Domain, build_cartesian_mesh

UNIT = Domain(0.0, 0.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def mesh():
    return build_cartesian_mesh(UNIT, 8, 8)


class TestCellField:
    def test_mass_and_norms(self, mesh):
        f = CellField(mesh, np.full(mesh.n_cells, 2.0))
        assert abs(f.mass() - 2.0) < 1e-14
        assert abs(f.lq_norm(2) - 2.0) < 1e-14
        assert abs(f.lq_norm(np.inf) - 2.0) < 1e-15

    def test_shape_mismatch(self, mesh):
        with pytest.raises(ValueError):
            CellField(mesh, np.ones(5))

    def test_csv_roundtrip_exact(self, mesh):
        rng = np.random.default_rng(1)
        f = CellField(mesh, rng.random(mesh.n_cells))
        buf = io.StringIO()
        f.to_csv(buf)
        buf.seek(0)
        g = CellField.from_csv(mesh, buf)
        assert np.array_equal(f.values, g.values)


class TestCatalog:
    def test_zero(self):
        u = named_field("zero")
        X = np.random.default_rng(0).random((7, 2))
        assert np.all(u(0.3, X) == 0.0)
        assert u.linf_bound == 0.0

    def test_constant(self):
        u = named_field("constant", ux=0.3, uy=-0.4)
        X = np.zeros((3, 2))
        out = u(0.0, X)
        assert np.allclose(out, [0.3, -0.4])
        assert abs(u.linf_bound - 0.5) < 1e-15

    def test_rotation_divergence_free(self):
        u = named_field("rotation", omega=2.0, cx=0.5, cy=0.5)
        rng = np.random.default_rng(5)
        X = rng.random((50, 2))
        assert np.allclose(u.divergence(0.1, X), 0.0, atol=1e-13)
        # tangential: u . (x - c) = 0
        rel = X - 0.5
        assert np.allclose((u(0.0, X) * rel).sum(axis=1), 0.0, atol=1e-14)

    def test_rough_vortex_profile(self):
        beta, cap = 0.5, 1.0
        u = named_field("rough_vortex", beta=beta, cap=cap, cx=0.5, cy=0.5)
        # speed is min(r^beta / beta, cap); at r = 0.04: sqrt(0.04)/0.5 = 0.4
        X = np.array([[0.54, 0.5]])
        sp = np.linalg.norm(u(0.0, X))
        assert abs(sp - 0.04 ** beta / beta) < 1e-12
        # far from the center the cap binds
        Xf = np.array([[0.5 + 0.45, 0.5]])
        assert abs(np.linalg.norm(u(0.0, Xf)) - cap) < 1e-12
        # bounded everywhere, center regularized
        X0 = np.array([[0.5, 0.5]])
        assert np.all(np.isfinite(u(0.0, X0)))
        assert u.sobolev_p < 2.0 / (1.0 - beta) + 1e-9
        assert np.allclose(u.divergence(0.0, np.random.default_rng(2)
                                        .random((20, 2))), 0.0, atol=1e-6)

    def test_compressive_divergence(self):
        g = 3.0
        u = named_field("compressive", gamma=g, cx=0.5, cy=0.5)
        X = np.random.default_rng(8).random((20, 2))
        assert np.allclose(u.divergence(0.0, X), -2 * g, atol=1e-12)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="catalog"):
            named_field("warp-drive")

    def test_bad_callback_shape_caught(self):
        from fvkr.fields import VelocityField
        u = VelocityField(lambda t, X: X[:, 0])
        with pytest.raises(ValueError, match="expected"):
            u(0.0, np.zeros((4, 2)))


class TestVelocityCSV:
    def test_tabulated_matches_analytic_inside(self):
        # tabulate a linear field; bilinear interpolation is exact for it
        xs = np.linspace(0, 1, 11)
        rows = ["t,x,y,ux,uy"]
        for y in xs:
            for x in xs:
                rows.append(f"0.0,{x},{y},{0.5 * x - 0.1 * y},{0.3 * y}")
        u = velocity_from_csv(io.StringIO("\n".join(rows)))
        X = np.random.default_rng(3).random((40, 2)) * 0.8 + 0.1
        out = u(0.0, X)
        expect = np.column_stack([0.5 * X[:, 0] - 0.1 * X[:, 1],
                                  0.3 * X[:, 1]])
        assert np.allclose(out, expect, atol=1e-12)

"""Network-simplex engine vs scipy's HiGHS LP on random instances."""
import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from fvkr import _netsimplex as ns


def _highs_value(a, b, C):
    m, n = C.shape
    rows, cols, vals = [], [], []
    for i in range(m):
        rows.extend([i] * n)
        cols.extend(range(i * n, (i + 1) * n))
        vals.extend([1.0] * n)
    for j in range(n):
        rows.extend([m + j] * m)
        cols.extend(j + n * np.arange(m))
        vals.extend([1.0] * m)
    A = coo_matrix((vals, (rows, cols)), shape=(m + n, m * n))
    # drop the redundant last row so HiGHS sees a full-rank system
    rhs = np.concatenate([a, b])
    res = linprog(C.ravel(), A_eq=A.tocsr()[:-1], b_eq=rhs[:-1],
                  bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return res.fun


def _check_instance(a, b, C, tol=1e-9):
    status, value, ai, aj, flows, u, v, iters = ns.solve_transport(a, b, C)
    assert status == ns.OPTIMAL
    # primal feasibility on the basic arcs
    fa = np.bincount(ai, weights=flows, minlength=len(a))
    fb = np.bincount(aj, weights=flows, minlength=len(b))
    assert np.abs(fa - a).max() <= 1e-10 * max(a.sum(), 1.0)
    assert np.abs(fb - b).max() <= 1e-10 * max(a.sum(), 1.0)
    assert flows.min() >= -1e-12 * max(a.max(), b.max())
    # dual feasibility everywhere, complementary value, HiGHS agreement
    rc = C - u[:, None] - v[None, :]
    assert rc.min() >= -1e-9
    assert abs((a @ u + b @ v) - value) <= 1e-9 * max(abs(value), 1.0)
    assert abs(value - _highs_value(a, b, C)) <= tol * max(abs(value), 1.0)
    return value


class TestRandomInstances:
    def test_small_dense_batch(self):
        rng = np.random.default_rng(7)
        for trial in range(40):
            m = rng.integers(2, 30)
            n = rng.integers(2, 30)
            a = rng.random(m) + 1e-3
            b = rng.random(n) + 1e-3
            b *= a.sum() / b.sum()
            C = rng.random((m, n))
            _check_instance(a, b, C)

    def test_rectangular_extremes(self):
        rng = np.random.default_rng(8)
        for m, n in [(1, 17), (17, 1), (2, 200), (200, 2)]:
            a = rng.random(m) + 0.1
            b = rng.random(n) + 0.1
            b *= a.sum() / b.sum()
            C = rng.random((m, n))
            _check_instance(a, b, C)

    def test_degenerate_equal_costs(self):
        # all-ties cost: any feasible plan is optimal; value = c * mass
        a = np.full(6, 1.0)
        b = np.full(4, 1.5)
        C = np.full((6, 4), 3.0)
        status, value, *_ = ns.solve_transport(a, b, C)
        assert status == ns.OPTIMAL
        assert value == pytest.approx(3.0 * 6.0, rel=1e-12)

    def test_degenerate_clustered_masses(self):
        # many identical atoms force degenerate pivots
        rng = np.random.default_rng(9)
        a = np.full(25, 0.2)
        b = np.full(20, 0.25)
        C = np.round(rng.random((25, 20)) * 4) / 4    # heavy cost ties too
        _check_instance(a, b, C)

    def test_identity_map_zero_cost(self):
        n = 12
        a = np.full(n, 1.0 / n)
        C = 1.0 - np.eye(n)
        status, value, *_ = ns.solve_transport(a, a.copy(), C)
        assert status == ns.OPTIMAL
        assert value == pytest.approx(0.0, abs=1e-14)


class TestFlowsFromBasis:
    def test_recovers_flows_on_original_masses(self):
        rng = np.random.default_rng(10)
        a = rng.random(15) + 0.05
        b = rng.random(12) + 0.05
        b *= a.sum() / b.sum()
        C = rng.random((15, 12))
        status, value, ai, aj, flows, u, v, iters = ns.solve_transport(a, b, C)
        assert status == ns.OPTIMAL
        rec = ns.flows_from_basis(ai, aj, a, b)
        assert np.abs(rec - flows).max() <= 1e-12
        # same tree on perturbed masses still satisfies those marginals
        ap = a + 1e-6 * np.arange(1, 16)
        bp = b + 1e-6 * np.arange(1, 13) * (a.sum() / b.sum())
        bp *= ap.sum() / bp.sum()
        rec2 = ns.flows_from_basis(ai, aj, ap, bp)
        fa = np.bincount(ai, weights=rec2, minlength=15)
        fb = np.bincount(aj, weights=rec2, minlength=12)
        assert np.abs(fa - ap).max() <= 1e-12
        assert np.abs(fb - bp).max() <= 1e-12

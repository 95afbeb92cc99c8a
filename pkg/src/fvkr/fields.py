"""Field containers: cell data, velocity callbacks, face fluxes.

A ``VelocityField`` is a vectorized callback ``u(t, X) -> (n, 2)`` plus the
declared analytic metadata the monitors need (L-inf bound, Sobolev exponent,
optional divergence callback).  ``FluxField`` holds the face-averaged normal
velocities u_KL per time slab, stored once per face with the K -> L
orientation so antisymmetry u_LK = -u_KL is structural.  Boundary faces carry
zero flux (no-flow condition).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field as dc_field

import numpy as np

__all__ = [
    "CellField",
    "VelocityField",
    "FluxField",
    "named_field",
    "velocity_from_csv",
    "FIELD_CATALOG",
]


@dataclass
class CellField:
    """Piecewise-constant field: one value per mesh cell."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_cells,):
            raise ValueError(
                f"values shape {self.values.shape} != ({self.mesh.n_cells},)")

    def mass(self):
        return float(self.mesh.cell_volumes @ self.values)

    def lq_norm(self, q):
        """(sum |K| |theta_K|^q)^(1/q); q = inf gives the max norm."""
        if np.isinf(q):
            return float(np.abs(self.values).max())
        q = float(q)
        if q <= 0:
            raise ValueError("q must be positive")
        return float((self.mesh.cell_volumes @ np.abs(self.values) ** q) ** (1.0 / q))

    def min(self):
        return float(self.values.min())

    def max(self):
        return float(self.values.max())

    def copy(self):
        return CellField(self.mesh, self.values.copy())

    def to_csv(self, path_or_file):
        own = isinstance(path_or_file, (str, bytes))
        f = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(f)
            w.writerow(["cell_id", "value"])
            for i, v in enumerate(self.values):
                w.writerow([i, repr(float(v))])
        finally:
            if own:
                f.close()

    @classmethod
    def from_csv(cls, mesh, path_or_file):
        own = isinstance(path_or_file, (str, bytes))
        f = open(path_or_file, newline="") if own else path_or_file
        try:
            rows = list(csv.reader(f))
        finally:
            if own:
                f.close()
        if rows and rows[0] and rows[0][0].strip().lower() == "cell_id":
            rows = rows[1:]
        vals = np.full(mesh.n_cells, np.nan)
        for row in rows:
            if not row:
                continue
            i = int(row[0])
            if not 0 <= i < mesh.n_cells:
                raise ValueError(f"cell_id {i} out of range")
            vals[i] = float(row[1])
        if np.isnan(vals).any():
            missing = int(np.isnan(vals).sum())
            raise ValueError(f"{missing} cells have no value in the CSV")
        return cls(mesh, vals)


@dataclass
class VelocityField:
    """Velocity callback with declared analytic metadata.

    ``func(t, X)`` must accept a scalar time and an (n, 2) array of points and
    return an (n, 2) array.  ``div`` (same signature, scalar output per point)
    is optional; monitors fall back to finite differences without it.
    ``sobolev_p`` records the declared W^{1,p} integrability of the gradient;
    it is metadata, not something the code verifies.
    """

    func: object
    name: str = "custom"
    linf_bound: float = np.inf
    sobolev_p: float = np.inf
    div: object = None
    time_dependent: bool = False
    domain: object = None
    params: dict = dc_field(default_factory=dict)

    def __call__(self, t, X):
        X = np.asarray(X, dtype=float)
        out = np.asarray(self.func(t, X), dtype=float)
        if out.shape != X.shape:
            raise ValueError(f"velocity callback returned {out.shape}, "
                             f"expected {X.shape}")
        return out

    def divergence(self, t, X, eps=1e-6):
        """Declared divergence, or a central finite-difference fallback."""
        X = np.asarray(X, dtype=float)
        if self.div is not None:
            return np.asarray(self.div(t, X), dtype=float)
        ex = np.array([eps, 0.0])
        ey = np.array([0.0, eps])
        dux = (self(t, X + ex)[:, 0] - self(t, X - ex)[:, 0]) / (2 * eps)
        dvy = (self(t, X + ey)[:, 1] - self(t, X - ey)[:, 1]) / (2 * eps)
        return dux + dvy


@dataclass
class FluxField:
    """Face-averaged normal velocities per time slab.

    ``values[s, j]`` is u_KL for face j on slab s (orientation K -> L from the
    mesh).  Steady fields store a single slab; ``slab(n)`` broadcasts it.
    """

    mesh: object
    values: np.ndarray          # (n_slabs, m)
    k: float                    # time step
    T: float
    n_steps: int
    steady: bool

    def slab(self, n):
        if not 0 <= n < self.n_steps:
            raise IndexError(f"slab {n} outside 0..{self.n_steps - 1}")
        return self.values[0] if self.steady else self.values[n]

    def linf(self):
        return float(np.abs(self.values).max()) if self.values.size else 0.0


# ---------------------------------------------------------------------------
# catalog of analytic velocity fields


def _zero_factory(**kw):
    def f(t, X):
        return np.zeros_like(X)

    def d(t, X):
        return np.zeros(len(X))

    return VelocityField(f, name="zero", linf_bound=0.0, div=d,
                         sobolev_p=np.inf)


def _constant_factory(ux=1.0, uy=0.0, **kw):
    vec = np.array([float(ux), float(uy)])

    def f(t, X):
        return np.broadcast_to(vec, X.shape).copy()

    def d(t, X):
        return np.zeros(len(X))

    return VelocityField(f, name="constant", linf_bound=float(np.hypot(ux, uy)),
                         div=d, sobolev_p=np.inf, params={"ux": ux, "uy": uy})


def _rotation_factory(omega=1.0, cx=0.5, cy=0.5, radius=np.sqrt(0.5), **kw):
    """Rigid rotation about (cx, cy): u = omega * (-(y-cy), x-cx)."""
    omega = float(omega)

    def f(t, X):
        out = np.empty_like(X)
        out[:, 0] = -omega * (X[:, 1] - cy)
        out[:, 1] = omega * (X[:, 0] - cx)
        return out

    def d(t, X):
        return np.zeros(len(X))

    return VelocityField(f, name="rotation", div=d, sobolev_p=np.inf,
                         linf_bound=abs(omega) * float(radius),
                         params={"omega": omega, "cx": cx, "cy": cy})


def _rough_vortex_factory(beta=0.5, cap=1.0, cx=0.5, cy=0.5, eps=0.0, **kw):
    """Divergence-free vortex with azimuthal speed V(r) = min(r^beta/beta, cap).

    V' ~ r^(beta-1) blows up at the center, so u is W^{1,p} only for
    p < 2/(1-beta) and in particular not Lipschitz.
    """
    beta = float(beta)
    cap = float(cap)
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")

    def f(t, X):
        rx = X[:, 0] - cx
        ry = X[:, 1] - cy
        r = np.hypot(rx, ry)
        v = np.minimum(r ** beta / beta, cap)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(r > 0, v / r, 0.0)
        out = np.empty_like(X)
        out[:, 0] = -scale * ry
        out[:, 1] = scale * rx
        return out

    def d(t, X):
        return np.zeros(len(X))

    return VelocityField(f, name="rough_vortex", div=d, linf_bound=cap,
                         sobolev_p=2.0 / (1.0 - beta) - 1e-9,
                         params={"beta": beta, "cap": cap, "cx": cx, "cy": cy})


def _compressive_factory(gamma=1.0, cx=0.5, cy=0.5, radius=np.sqrt(0.5), **kw):
    """Linear sink u = -gamma (x - c); div u = -2 gamma everywhere."""
    gamma = float(gamma)

    def f(t, X):
        return -gamma * (X - np.array([cx, cy]))

    def d(t, X):
        return np.full(len(X), -2.0 * gamma)

    return VelocityField(f, name="compressive", div=d, sobolev_p=np.inf,
                         linf_bound=abs(gamma) * float(radius),
                         params={"gamma": gamma, "cx": cx, "cy": cy})


FIELD_CATALOG = {
    "zero": _zero_factory,
    "constant": _constant_factory,
    "rotation": _rotation_factory,
    "rough_vortex": _rough_vortex_factory,
    "compressive": _compressive_factory,
}


def named_field(name, **params):
    """Instantiate a catalog velocity field by name."""
    try:
        factory = FIELD_CATALOG[name]
    except KeyError:
        known = ", ".join(sorted(FIELD_CATALOG))
        raise ValueError(f"unknown field {name!r}; catalog: {known}") from None
    return factory(**params)


def velocity_from_csv(path_or_file, time_dependent=None, sobolev_p=np.inf):
    """Tabulated velocity samples ``t,x,y,ux,uy`` with bilinear interpolation.

    The samples must form a full tensor grid in (t, x, y).  Interpolation is
    bilinear in space and linear in time; values outside the sampled box are
    clamped to the nearest sample.  Trace regularity of the interpolant is not
    claimed -- the declared `sobolev_p` is taken at face value.
    """
    from scipy.interpolate import RegularGridInterpolator

    own = isinstance(path_or_file, (str, bytes))
    f = open(path_or_file, newline="") if own else path_or_file
    try:
        rows = list(csv.reader(f))
    finally:
        if own:
            f.close()
    if rows and rows[0] and rows[0][0].strip().lower() == "t":
        rows = rows[1:]
    data = np.array([[float(v) for v in row] for row in rows if row])
    if data.shape[1] != 5:
        raise ValueError("expected columns t,x,y,ux,uy")
    ts = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    ys = np.unique(data[:, 2])
    if len(ts) * len(xs) * len(ys) != len(data):
        raise ValueError("samples do not form a full (t, x, y) grid")
    U = np.full((len(ts), len(xs), len(ys), 2), np.nan)
    it = np.searchsorted(ts, data[:, 0])
    ix = np.searchsorted(xs, data[:, 1])
    iy = np.searchsorted(ys, data[:, 2])
    U[it, ix, iy, 0] = data[:, 3]
    U[it, ix, iy, 1] = data[:, 4]
    if np.isnan(U).any():
        raise ValueError("duplicate or missing grid samples")

    if len(ts) == 1:
        interp = RegularGridInterpolator((xs, ys), U[0], method="linear",
                                         bounds_error=False, fill_value=None)

        def func(t, X):
            return interp(np.clip(X, [xs[0], ys[0]], [xs[-1], ys[-1]]))

        tdep = False
    else:
        interp = RegularGridInterpolator((ts, xs, ys), U, method="linear",
                                         bounds_error=False, fill_value=None)

        def func(t, X):
            tc = min(max(float(t), ts[0]), ts[-1])
            P = np.column_stack([np.full(len(X), tc),
                                 np.clip(X[:, 0], xs[0], xs[-1]),
                                 np.clip(X[:, 1], ys[0], ys[-1])])
            return interp(P)

        tdep = True
    if time_dependent is not None:
        tdep = bool(time_dependent)
    bound = float(np.abs(U).max())
    return VelocityField(func, name="csv", linf_bound=bound,
                         sobolev_p=sobolev_p, time_dependent=tdep)

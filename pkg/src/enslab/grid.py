"""Staggered (MAC) grid on the unit square and its discrete operators.

Layout
------
The domain is [0,1] x [0,1] split into nx * ny square cells of side h = 1/nx.

* Cell-centered scalars (pressure, divergence) live at
  ((i + 1/2) h, (j + 1/2) h), array shape (nx, ny), index [i, j] with i the
  x index.
* x-face values (first velocity component) live at (i h, (j + 1/2) h),
  shape (nx + 1, ny).  Faces i = 0 and i = nx lie on the left/right walls.
* y-face values (second velocity component) live at ((i + 1/2) h, j h),
  shape (nx, ny + 1).  Faces j = 0 and j = ny lie on the bottom/top walls.

This staggering makes the discrete divergence and gradient exact negative
adjoints of each other, which in turn makes the orthogonal-decomposition and
projection identities of the higher modules machine-precision statements
instead of O(h) ones.

Boundary closures (ghost values) used by the Laplacians:

* scalar, zero-flux ("neumann"):   ghost = interior value
* scalar, zero-value ("dirichlet"): ghost = -interior value
* vector, bc="noslip": wall-normal faces are pinned to zero (their rows
  return 0 and their values are read as 0), tangential components use the
  odd ghost (value at the wall itself is zero);
* vector, bc="tangential": tangential components use the odd ghost, while
  wall-normal faces remain genuine unknowns closed with an even ghost across
  the wall.  The even ghost is exactly the closure that makes
  divergence(vector_laplacian(w, "tangential")) == laplacian_dirichlet(divergence(w))
  hold to round-off, i.e. the vector heat flow drives the divergence by the
  zero-value scalar heat flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "BoundaryTrace",
    "divergence",
    "gradient",
    "laplacian_neumann",
    "laplacian_dirichlet",
    "vector_laplacian",
    "scalar_inner",
    "scalar_norm",
    "integral",
    "mean",
    "face_inner",
    "face_norm",
    "scalar_grad_inner",
    "grad_inner",
    "normal_trace",
    "with_normal_trace",
    "trace_integral",
    "boundary_divergence_trace",
    "scalar_from_function",
    "vector_from_functions",
    "vector_from_stream",
]


@dataclass(frozen=True)
class Grid:
    """Geometry of the staggered unit-square grid (square cells, nx == ny)."""

    nx: int
    ny: int = -1

    def __post_init__(self) -> None:
        if self.ny == -1:
            object.__setattr__(self, "ny", self.nx)
        if self.nx != self.ny:
            raise ValueError(f"square cells required: nx={self.nx} != ny={self.ny}")
        if self.nx < 4:
            raise ValueError(f"grid too coarse: nx={self.nx} < 4")
        if (1.0 / self.nx) * self.nx != 1.0:
            raise ValueError(f"1/nx*nx != 1 in floating point for nx={self.nx}")

    @property
    def h(self) -> float:
        return 1.0 / self.nx

    @property
    def shape_cell(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def shape_u(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny)

    @property
    def shape_v(self) -> tuple[int, int]:
        return (self.nx, self.ny + 1)

    # 1D coordinate arrays ------------------------------------------------
    def cell_x(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.h

    def cell_y(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.h

    def xface_x(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.h

    def yface_y(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.h

    def node_x(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.h

    def node_y(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.h


def _own(values: np.ndarray, shape: tuple[int, int], what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True, order="C")
    if arr.shape != shape:
        raise DimensionMismatchError(f"{what}: expected shape {shape}, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{what}: non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """One float64 value per cell center; immutable."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _own(self.values, self.grid.shape_cell, "ScalarField"))

    @staticmethod
    def zeros(grid: Grid) -> "ScalarField":
        return ScalarField(grid, np.zeros(grid.shape_cell))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        _same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * float(a))

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True)
class VectorField:
    """Face-normal velocity components; immutable.

    ``u`` holds the x component on x-faces (shape (nx+1, ny)), ``v`` the
    y component on y-faces (shape (nx, ny+1)).
    """

    grid: Grid
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "u", _own(self.u, self.grid.shape_u, "VectorField.u"))
        object.__setattr__(self, "v", _own(self.v, self.grid.shape_v, "VectorField.v"))

    @staticmethod
    def zeros(grid: Grid) -> "VectorField":
        return VectorField(grid, np.zeros(grid.shape_u), np.zeros(grid.shape_v))

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_grid(self.grid, other.grid)
        return VectorField(self.grid, self.u + other.u, self.v + other.v)

    def __sub__(self, other: "VectorField") -> "VectorField":
        _same_grid(self.grid, other.grid)
        return VectorField(self.grid, self.u - other.u, self.v - other.v)

    def __mul__(self, a: float) -> "VectorField":
        a = float(a)
        return VectorField(self.grid, self.u * a, self.v * a)

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField":
        return VectorField(self.grid, -self.u, -self.v)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(self.u))), float(np.max(np.abs(self.v))))


@dataclass(frozen=True)
class BoundaryTrace:
    """Outward normal velocity u.n, one value per boundary face.

    ``left``/``right`` have length ny (x-faces on the walls x = 0 and x = 1),
    ``bottom``/``top`` length nx (y-faces on the walls y = 0 and y = 1).
    Values are signed with respect to the outward normal: a positive value
    means outflow on every wall.
    """

    grid: Grid
    left: np.ndarray
    right: np.ndarray
    bottom: np.ndarray
    top: np.ndarray

    def __post_init__(self) -> None:
        g = self.grid
        for name, n in (("left", g.ny), ("right", g.ny), ("bottom", g.nx), ("top", g.nx)):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if arr.shape != (n,):
                raise DimensionMismatchError(f"BoundaryTrace.{name}: expected ({n},), got {arr.shape}")
            if not np.isfinite(arr).all():
                raise ValueError(f"BoundaryTrace.{name}: non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @staticmethod
    def zeros(grid: Grid) -> "BoundaryTrace":
        return BoundaryTrace(grid, np.zeros(grid.ny), np.zeros(grid.ny), np.zeros(grid.nx), np.zeros(grid.nx))

    @staticmethod
    def constant(grid: Grid, value: float) -> "BoundaryTrace":
        value = float(value)
        return BoundaryTrace(
            grid,
            np.full(grid.ny, value),
            np.full(grid.ny, value),
            np.full(grid.nx, value),
            np.full(grid.nx, value),
        )

    def scaled(self, a: float) -> "BoundaryTrace":
        a = float(a)
        return BoundaryTrace(self.grid, self.left * a, self.right * a, self.bottom * a, self.top * a)

    def blend(self, a: float, other: "BoundaryTrace", b: float) -> "BoundaryTrace":
        _same_grid(self.grid, other.grid)
        return BoundaryTrace(
            self.grid,
            a * self.left + b * other.left,
            a * self.right + b * other.right,
            a * self.bottom + b * other.bottom,
            a * self.top + b * other.top,
        )

    def max_abs(self) -> float:
        return max(
            float(np.max(np.abs(self.left))),
            float(np.max(np.abs(self.right))),
            float(np.max(np.abs(self.bottom))),
            float(np.max(np.abs(self.top))),
        )


def _same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise DimensionMismatchError(f"grids differ: {a} vs {b}")


# ---------------------------------------------------------------------------
# First-order operators
# ---------------------------------------------------------------------------

def divergence(w: VectorField) -> ScalarField:
    """Flux-form divergence per cell: includes wall-face contributions."""
    g = w.grid
    d = (w.u[1:, :] - w.u[:-1, :] + w.v[:, 1:] - w.v[:, :-1]) / g.h
    return ScalarField(g, d)


def gradient(p: ScalarField) -> VectorField:
    """Face differences of a cell scalar; wall faces receive 0.

    Boundary conditions are the business of the solvers that use the
    operator, so wall faces carry the homogeneous-flux convention here.
    """
    g = p.grid
    gu = np.zeros(g.shape_u)
    gv = np.zeros(g.shape_v)
    gu[1:-1, :] = (p.values[1:, :] - p.values[:-1, :]) / g.h
    gv[:, 1:-1] = (p.values[:, 1:] - p.values[:, :-1]) / g.h
    return VectorField(g, gu, gv)


# ---------------------------------------------------------------------------
# Laplacians
# ---------------------------------------------------------------------------

def _pad_scalar(vals: np.ndarray, sign: float) -> np.ndarray:
    """Ghost-pad a cell array: ghost = sign * adjacent interior value."""
    padded = np.empty((vals.shape[0] + 2, vals.shape[1] + 2))
    padded[1:-1, 1:-1] = vals
    padded[0, 1:-1] = sign * vals[0, :]
    padded[-1, 1:-1] = sign * vals[-1, :]
    padded[1:-1, 0] = sign * vals[:, 0]
    padded[1:-1, -1] = sign * vals[:, -1]
    # corners are never read by the 5-point stencil
    padded[0, 0] = padded[0, -1] = padded[-1, 0] = padded[-1, -1] = 0.0
    return padded


def _five_point(padded: np.ndarray, h: float) -> np.ndarray:
    c = padded[1:-1, 1:-1]
    return (padded[2:, 1:-1] + padded[:-2, 1:-1] + padded[1:-1, 2:] + padded[1:-1, :-2] - 4.0 * c) / (h * h)


def laplacian_neumann(p: ScalarField) -> ScalarField:
    """5-point Laplacian with zero-flux closure (ghost = interior)."""
    return ScalarField(p.grid, _five_point(_pad_scalar(p.values, +1.0), p.grid.h))


def laplacian_dirichlet(p: ScalarField) -> ScalarField:
    """5-point Laplacian with zero-value closure (ghost = -interior)."""
    return ScalarField(p.grid, _five_point(_pad_scalar(p.values, -1.0), p.grid.h))


def vector_laplacian(w: VectorField, bc: str) -> VectorField:
    """Component-wise 5-point Laplacian with velocity boundary closure.

    bc="noslip": wall-normal faces are read as zero and their rows return
    zero; tangential components use the odd ghost.

    bc="tangential": tangential components use the odd ghost; wall-normal
    faces are genuine unknowns closed with the even ghost across the wall.
    """
    g = w.grid
    h2 = g.h * g.h
    if bc == "noslip":
        un = w.u.copy()
        un[0, :] = 0.0
        un[-1, :] = 0.0
        lu = np.zeros(g.shape_u)
        # x part: wall values enter as (zero) Dirichlet data on the wall face
        lu[1:-1, :] = un[2:, :] - 2.0 * un[1:-1, :] + un[:-2, :]
        # y part: odd ghost for the tangential direction
        lu[1:-1, 1:-1] += un[1:-1, 2:] - 2.0 * un[1:-1, 1:-1] + un[1:-1, :-2]
        lu[1:-1, 0] += un[1:-1, 1] - 3.0 * un[1:-1, 0]
        lu[1:-1, -1] += un[1:-1, -2] - 3.0 * un[1:-1, -1]

        vn = w.v.copy()
        vn[:, 0] = 0.0
        vn[:, -1] = 0.0
        lv = np.zeros(g.shape_v)
        lv[:, 1:-1] = vn[:, 2:] - 2.0 * vn[:, 1:-1] + vn[:, :-2]
        lv[1:-1, 1:-1] += vn[2:, 1:-1] - 2.0 * vn[1:-1, 1:-1] + vn[:-2, 1:-1]
        lv[0, 1:-1] += vn[1, 1:-1] - 3.0 * vn[0, 1:-1]
        lv[-1, 1:-1] += vn[-2, 1:-1] - 3.0 * vn[-1, 1:-1]
        return VectorField(g, lu / h2, lv / h2)
    if bc == "tangential":
        u = w.u
        lu = np.zeros(g.shape_u)
        # x part with even ghost at the wall-normal faces
        lu[1:-1, :] = u[2:, :] - 2.0 * u[1:-1, :] + u[:-2, :]
        lu[0, :] = 2.0 * (u[1, :] - u[0, :])
        lu[-1, :] = 2.0 * (u[-2, :] - u[-1, :])
        # y part with odd ghost (tangential component vanishes at the wall)
        lu[:, 1:-1] += u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]
        lu[:, 0] += u[:, 1] - 3.0 * u[:, 0]
        lu[:, -1] += u[:, -2] - 3.0 * u[:, -1]

        v = w.v
        lv = np.zeros(g.shape_v)
        lv[:, 1:-1] = v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]
        lv[:, 0] = 2.0 * (v[:, 1] - v[:, 0])
        lv[:, -1] = 2.0 * (v[:, -2] - v[:, -1])
        lv[1:-1, :] += v[2:, :] - 2.0 * v[1:-1, :] + v[:-2, :]
        lv[0, :] += v[1, :] - 3.0 * v[0, :]
        lv[-1, :] += v[-2, :] - 3.0 * v[-1, :]
        return VectorField(g, lu / h2, lv / h2)
    raise ValueError(f"unknown bc {bc!r}; expected 'noslip' or 'tangential'")


# ---------------------------------------------------------------------------
# Inner products, norms, energies
# ---------------------------------------------------------------------------

def scalar_inner(p: ScalarField, q: ScalarField) -> float:
    _same_grid(p.grid, q.grid)
    h2 = p.grid.h * p.grid.h
    return float(np.dot(p.values.ravel(), q.values.ravel()) * h2)


def scalar_norm(p: ScalarField) -> float:
    return float(np.sqrt(max(scalar_inner(p, p), 0.0)))


def integral(p: ScalarField) -> float:
    return float(np.sum(p.values) * p.grid.h * p.grid.h)


def mean(p: ScalarField) -> float:
    return integral(p)  # |domain| = 1


def face_inner(a: VectorField, b: VectorField) -> float:
    _same_grid(a.grid, b.grid)
    h2 = a.grid.h * a.grid.h
    return float((np.dot(a.u.ravel(), b.u.ravel()) + np.dot(a.v.ravel(), b.v.ravel())) * h2)


def face_norm(a: VectorField) -> float:
    return float(np.sqrt(max(face_inner(a, a), 0.0)))


def scalar_grad_inner(p: ScalarField, q: ScalarField, bc: str) -> float:
    """Gradient-energy pairing equal to <-laplacian_bc p, q> exactly.

    bc="neumann": interior cell-to-cell differences only.
    bc="dirichlet": interior differences plus the wall terms 2*p0*q0 coming
    from the half-cell gradient against the zero wall value.
    """
    _same_grid(p.grid, q.grid)
    pv, qv = p.values, q.values
    s = np.dot((pv[1:, :] - pv[:-1, :]).ravel(), (qv[1:, :] - qv[:-1, :]).ravel())
    s += np.dot((pv[:, 1:] - pv[:, :-1]).ravel(), (qv[:, 1:] - qv[:, :-1]).ravel())
    if bc == "dirichlet":
        s += 2.0 * (
            np.dot(pv[0, :], qv[0, :])
            + np.dot(pv[-1, :], qv[-1, :])
            + np.dot(pv[:, 0], qv[:, 0])
            + np.dot(pv[:, -1], qv[:, -1])
        )
    elif bc != "neumann":
        raise ValueError(f"unknown bc {bc!r}; expected 'neumann' or 'dirichlet'")
    return float(s)


def grad_inner(a: VectorField, b: VectorField) -> float:
    """Discrete <grad a, grad b> for no-slip vector fields.

    Equals <-vector_laplacian(a, "noslip"), b> exactly whenever the
    wall-normal faces of both fields vanish; the pairing underlies every
    energy ledger and orthogonality statement downstream.
    """
    _same_grid(a.grid, b.grid)
    au, av, bu, bv = a.u, a.v, b.u, b.v
    # u component: differences across cells in x (wall faces enter with the
    # values stored there), interior differences in y plus odd-ghost wall terms
    s = np.dot((au[1:, :] - au[:-1, :]).ravel(), (bu[1:, :] - bu[:-1, :]).ravel())
    s += np.dot((au[:, 1:] - au[:, :-1]).ravel(), (bu[:, 1:] - bu[:, :-1]).ravel())
    s += 2.0 * (np.dot(au[:, 0], bu[:, 0]) + np.dot(au[:, -1], bu[:, -1]))
    # v component, symmetric roles
    s += np.dot((av[:, 1:] - av[:, :-1]).ravel(), (bv[:, 1:] - bv[:, :-1]).ravel())
    s += np.dot((av[1:, :] - av[:-1, :]).ravel(), (bv[1:, :] - bv[:-1, :]).ravel())
    s += 2.0 * (np.dot(av[0, :], bv[0, :]) + np.dot(av[-1, :], bv[-1, :]))
    return float(s)


# ---------------------------------------------------------------------------
# Boundary traces
# ---------------------------------------------------------------------------

def normal_trace(w: VectorField) -> BoundaryTrace:
    """Extract u.n (outward-signed) from the wall faces of a vector field."""
    return BoundaryTrace(w.grid, -w.u[0, :], w.u[-1, :], -w.v[:, 0], w.v[:, -1])


def with_normal_trace(w: VectorField, trace: BoundaryTrace) -> VectorField:
    """Return a copy of w whose wall faces realize the given u.n trace."""
    _same_grid(w.grid, trace.grid)
    u = w.u.copy()
    v = w.v.copy()
    u[0, :] = -trace.left
    u[-1, :] = trace.right
    v[:, 0] = -trace.bottom
    v[:, -1] = trace.top
    return VectorField(w.grid, u, v)


def trace_integral(trace: BoundaryTrace) -> float:
    """Perimeter integral of the trace (face length h per boundary face)."""
    h = trace.grid.h
    return float(h * (np.sum(trace.left) + np.sum(trace.right) + np.sum(trace.bottom) + np.sum(trace.top)))


def boundary_divergence_trace(p: ScalarField) -> BoundaryTrace:
    """Quadratically extrapolated wall values of a cell scalar.

    Cell centers sit at distances h/2, 3h/2, 5h/2 from each wall; the
    three-point Lagrange extrapolant to the wall is (15 a - 10 b + 3 c)/8.
    Used to measure the wall trace of the divergence, the discrete content
    of a zero-divergence boundary condition.
    """
    vals = p.values

    def extrap(a, b, c):
        return (15.0 * a - 10.0 * b + 3.0 * c) / 8.0

    return BoundaryTrace(
        p.grid,
        extrap(vals[0, :], vals[1, :], vals[2, :]),
        extrap(vals[-1, :], vals[-2, :], vals[-3, :]),
        extrap(vals[:, 0], vals[:, 1], vals[:, 2]),
        extrap(vals[:, -1], vals[:, -2], vals[:, -3]),
    )


# ---------------------------------------------------------------------------
# Constructors from closed-form functions
# ---------------------------------------------------------------------------

def scalar_from_function(grid: Grid, f) -> ScalarField:
    x = grid.cell_x()[:, None]
    y = grid.cell_y()[None, :]
    return ScalarField(grid, np.broadcast_to(f(x, y), grid.shape_cell).copy())


def vector_from_functions(grid: Grid, fu, fv) -> VectorField:
    xu = grid.xface_x()[:, None]
    yu = grid.cell_y()[None, :]
    xv = grid.cell_x()[:, None]
    yv = grid.yface_y()[None, :]
    u = np.broadcast_to(fu(xu, yu), grid.shape_u).copy()
    v = np.broadcast_to(fv(xv, yv), grid.shape_v).copy()
    return VectorField(grid, u, v)


def vector_from_stream(grid: Grid, psi: np.ndarray) -> VectorField:
    """Discrete curl of a node-based stream function (shape (nx+1, ny+1)).

    The result is divergence-free to round-off by telescoping.
    """
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape != (grid.nx + 1, grid.ny + 1):
        raise DimensionMismatchError(f"stream function: expected {(grid.nx + 1, grid.ny + 1)}, got {psi.shape}")
    u = (psi[:, 1:] - psi[:, :-1]) / grid.h
    v = -(psi[1:, :] - psi[:-1, :]) / grid.h
    return VectorField(grid, u, v)

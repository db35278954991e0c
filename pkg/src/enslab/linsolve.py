"""Sparse symmetric linear solvers shared by every elliptic subproblem.

Contents
--------
* ``SparseOperator`` / ``SolveReport`` / ``cg_solve``: conjugate gradient with
  optional null-space deflation and breakdown reporting.
* Cached sparse factorizations (SuperLU) of the fixed operators: scalar
  Laplacians, heat/Helmholtz matrices, the no-slip viscous block.
* ``NeumannPoisson``: the singular zero-flux Poisson solve, made definite by
  pinning one cell; exact for compatible right-hand sides.
* ``stokes_solve``: Schur-complement (Uzawa-CG) solver for the stationary
  Stokes system with prescribed divergence and wall-normal velocity data.
* ``dense_stokes_solve``: direct bordered-matrix oracle for small grids.

All solvers are reentrant: a solve owns its workspace, and the factor cache
is append-only keyed by immutable tuples.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CompatibilityError, SolverError
from .grid import (
    BoundaryTrace,
    Grid,
    ScalarField,
    VectorField,
    divergence,
    gradient,
    integral,
    scalar_norm,
)

__all__ = [
    "SparseOperator",
    "SolveReport",
    "cg_solve",
    "NeumannPoisson",
    "neumann_poisson",
    "htilde_solver",
    "heat_solver",
    "NoslipHelmholtz",
    "noslip_helmholtz",
    "flatten_interior",
    "unflatten_interior",
    "stokes_solve",
    "dense_stokes_solve",
    "laplacian_neumann_matrix",
    "laplacian_dirichlet_matrix",
    "noslip_viscous_matrix",
]


# ---------------------------------------------------------------------------
# Operator and report types
# ---------------------------------------------------------------------------

class SparseOperator:
    """Symmetric linear operator given by a callback or an explicit matrix."""

    def __init__(self, n, apply=None, matrix=None, symmetric=True, nullspace=None):
        if (apply is None) == (matrix is None):
            raise ValueError("provide exactly one of apply/matrix")
        self.n = int(n)
        self._matrix = matrix
        self._apply = apply if apply is not None else (lambda x: matrix @ x)
        self.symmetric = bool(symmetric)
        basis = []
        for vec in nullspace or []:
            w = np.array(vec, dtype=np.float64).ravel()
            for b in basis:
                w = w - np.dot(b, w) * b
            nw = np.linalg.norm(w)
            if nw > 0:
                basis.append(w / nw)
        self.nullspace = basis

    @classmethod
    def from_matrix(cls, matrix, nullspace=None, symmetric=True):
        return cls(matrix.shape[0], matrix=matrix, symmetric=symmetric, nullspace=nullspace)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._apply(x)

    def deflate(self, x: np.ndarray) -> np.ndarray:
        for b in self.nullspace:
            x = x - np.dot(b, x) * b
        return x

    def verify(self, rng=None, probes: int = 3, tol: float = 1e-12) -> None:
        """Check symmetry on random probes and the declared null space."""
        rng = rng or np.random.default_rng(0)
        if self.symmetric:
            for _ in range(probes):
                x = rng.standard_normal(self.n)
                y = rng.standard_normal(self.n)
                axy = np.dot(self.apply(x), y)
                xay = np.dot(x, self.apply(y))
                scale = max(abs(axy), abs(xay), 1e-300)
                if abs(axy - xay) > tol * scale:
                    raise SolverError(f"operator not symmetric: |<Ax,y>-<x,Ay>| = {abs(axy - xay):.3e}")
        for b in self.nullspace:
            if np.linalg.norm(self.apply(b)) > tol * max(np.linalg.norm(b), 1e-300) * self.n:
                raise SolverError("declared null-space vector is not annihilated")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    breakdown: bool = False


def cg_solve(A: SparseOperator, b: np.ndarray, tol: float = 1e-10,
             max_iter: int | None = None, x0: np.ndarray | None = None,
             callback=None):
    """Conjugate gradient for symmetric positive (semi-)definite operators.

    For semi-definite operators the declared null space is deflated from the
    right-hand side and from every iterate.  Breakdown (non-positive
    curvature) stops the iteration and is flagged in the report, never
    silently ignored.  ``callback(x)``, if given, sees every iterate.
    Returns ``(x, SolveReport)``.
    """
    b = np.asarray(b, dtype=np.float64).ravel()
    if not np.isfinite(b).all():
        raise SolverError("cg_solve: non-finite right-hand side")
    if max_iter is None:
        max_iter = max(10 * A.n, 100)
    b = A.deflate(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(A.n), SolveReport(0, 0.0, True)
    x = np.zeros(A.n) if x0 is None else A.deflate(np.array(x0, dtype=np.float64).ravel())
    r = b - A.apply(x) if x0 is not None else b.copy()
    r = A.deflate(r)
    p = r.copy()
    rr = np.dot(r, r)
    it = 0
    while it < max_iter:
        if np.sqrt(rr) <= tol * bnorm:
            return x, SolveReport(it, float(np.sqrt(rr) / bnorm), True)
        ap = A.apply(p)
        if not np.isfinite(ap).all():
            raise SolverError("cg_solve: operator produced non-finite values")
        pap = np.dot(p, ap)
        if pap <= 0.0:
            return x, SolveReport(it, float(np.sqrt(rr) / bnorm), False, breakdown=True)
        alpha = rr / pap
        x = x + alpha * p
        r = r - alpha * ap
        if A.nullspace:
            x = A.deflate(x)
            r = A.deflate(r)
        if callback is not None:
            callback(x)
        rr_new = np.dot(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    return x, SolveReport(it, float(np.sqrt(rr) / bnorm), np.sqrt(rr) <= tol * bnorm)


# ---------------------------------------------------------------------------
# 1D stencil blocks and 2D assemblies
# ---------------------------------------------------------------------------

def _tridiag(n: int, end_diag: float, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    main[0] = end_diag
    main[-1] = end_diag
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def _t_neumann(n: int, h: float) -> sp.csr_matrix:
    return _tridiag(n, -1.0, h)          # ghost = interior


def _t_dirichlet_cell(n: int, h: float) -> sp.csr_matrix:
    return _tridiag(n, -3.0, h)          # ghost = -interior


def _t_dirichlet_node(n: int, h: float) -> sp.csr_matrix:
    # interior nodes 1..n-1 with zero data at nodes 0 and n
    m = n - 1
    main = np.full(m, -2.0)
    off = np.ones(m - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def laplacian_neumann_matrix(grid: Grid) -> sp.csr_matrix:
    tx = _t_neumann(grid.nx, grid.h)
    ty = _t_neumann(grid.ny, grid.h)
    return (sp.kron(tx, sp.identity(grid.ny)) + sp.kron(sp.identity(grid.nx), ty)).tocsr()


def laplacian_dirichlet_matrix(grid: Grid) -> sp.csr_matrix:
    tx = _t_dirichlet_cell(grid.nx, grid.h)
    ty = _t_dirichlet_cell(grid.ny, grid.h)
    return (sp.kron(tx, sp.identity(grid.ny)) + sp.kron(sp.identity(grid.nx), ty)).tocsr()


def noslip_viscous_matrix(grid: Grid) -> sp.csr_matrix:
    """Minus the no-slip vector Laplacian on interior faces (SPD)."""
    nx, ny, h = grid.nx, grid.ny, grid.h
    au = sp.kron(_t_dirichlet_node(nx, h), sp.identity(ny)) + sp.kron(
        sp.identity(nx - 1), _t_dirichlet_cell(ny, h))
    av = sp.kron(_t_dirichlet_cell(nx, h), sp.identity(ny - 1)) + sp.kron(
        sp.identity(nx), _t_dirichlet_node(ny, h))
    return (-sp.block_diag([au, av])).tocsr()


def flatten_interior(w: VectorField) -> np.ndarray:
    """Stack the interior-face values (wall faces dropped) into one vector."""
    return np.concatenate([w.u[1:-1, :].ravel(), w.v[:, 1:-1].ravel()])


def unflatten_interior(grid: Grid, x: np.ndarray, trace: BoundaryTrace | None = None) -> VectorField:
    """Rebuild a vector field from interior values; walls from trace or zero."""
    nu = (grid.nx - 1) * grid.ny
    u = np.zeros(grid.shape_u)
    v = np.zeros(grid.shape_v)
    u[1:-1, :] = x[:nu].reshape(grid.nx - 1, grid.ny)
    v[:, 1:-1] = x[nu:].reshape(grid.nx, grid.ny - 1)
    if trace is not None:
        u[0, :] = -trace.left
        u[-1, :] = trace.right
        v[:, 0] = -trace.bottom
        v[:, -1] = trace.top
    return VectorField(grid, u, v)


# ---------------------------------------------------------------------------
# Factor cache
# ---------------------------------------------------------------------------

_cache: dict = {}
_cache_lock = threading.Lock()


def _cached(key, builder):
    with _cache_lock:
        hit = _cache.get(key)
    if hit is not None:
        return hit
    value = builder()
    with _cache_lock:
        return _cache.setdefault(key, value)


def _lu_solver(matrix_csc) -> callable:
    lu = spla.splu(matrix_csc.tocsc())
    return lu.solve


class NeumannPoisson:
    """Zero-flux Poisson solve, pinned at one cell, exact for compatible data.

    The right-hand side is always deflated to mean zero first, so a genuinely
    incompatible source is answered by the solution of its mean-zero part
    (the leftover constant is the caller's business).  The returned field is
    the mean-zero representative.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        mat = laplacian_neumann_matrix(grid).tolil()
        mat[0, :] = 0.0
        mat[0, 0] = 1.0
        self._solve = _lu_solver(mat.tocsc())

    def solve_values(self, rhs: np.ndarray) -> np.ndarray:
        b = rhs.ravel().astype(np.float64, copy=True)
        b -= b.mean()
        b[0] = 0.0
        x = self._solve(b)
        x -= x.mean()
        return x.reshape(self.grid.shape_cell)

    def solve(self, rhs: ScalarField) -> ScalarField:
        return ScalarField(self.grid, self.solve_values(rhs.values))


def neumann_poisson(grid: Grid) -> NeumannPoisson:
    return _cached(("neumann_poisson", grid.nx, grid.ny), lambda: NeumannPoisson(grid))


def htilde_solver(grid: Grid):
    """Cached solver for (I - laplacian_neumann), the dual-norm realization."""
    def build():
        mat = sp.identity(grid.nx * grid.ny, format="csr") - laplacian_neumann_matrix(grid)
        return _lu_solver(mat)
    return _cached(("htilde", grid.nx, grid.ny), build)


def heat_solver(grid: Grid, a: float, bc: str, theta: str = "cn"):
    """Cached pair for heat stepping with coefficient a = nu*dt (full step).

    theta="cn":  solve (I - a/2 L) g+ = (I + a/2 L) g      (trapezoidal)
    theta="be":  solve (I - a L) g+ = g                     (backward Euler)
    Returns a callable values -> values.
    """
    key = ("heat", grid.nx, grid.ny, float(a), bc, theta)

    def build():
        lap = laplacian_neumann_matrix(grid) if bc == "neumann" else laplacian_dirichlet_matrix(grid)
        eye = sp.identity(grid.nx * grid.ny, format="csr")
        if theta == "cn":
            solve = _lu_solver(eye - (a / 2.0) * lap)
            plus = (eye + (a / 2.0) * lap).tocsr()

            def step(vals: np.ndarray) -> np.ndarray:
                return solve(plus @ vals.ravel()).reshape(grid.shape_cell)
        elif theta == "be":
            solve = _lu_solver(eye - a * lap)

            def step(vals: np.ndarray) -> np.ndarray:
                return solve(vals.ravel().copy()).reshape(grid.shape_cell)
        else:
            raise ValueError(f"unknown theta {theta!r}")
        return step

    if bc not in ("neumann", "dirichlet"):
        raise ValueError(f"unknown bc {bc!r}")
    return _cached(key, build)


class NoslipHelmholtz:
    """Solver for (I - c * Lap_noslip) on interior faces with optional wall data.

    With a wall trace given, the wall-normal faces are treated as Dirichlet
    data (their values folded into the right-hand side) and the returned
    field carries them; tangential wall values are zero by the closure.
    """

    def __init__(self, grid: Grid, c: float):
        self.grid = grid
        self.c = float(c)
        n = (grid.nx - 1) * grid.ny + grid.nx * (grid.ny - 1)
        mat = sp.identity(n, format="csr") + self.c * noslip_viscous_matrix(grid)
        self._solve = _lu_solver(mat)

    def solve(self, rhs: VectorField, trace: BoundaryTrace | None = None) -> VectorField:
        b = flatten_interior(rhs)
        if trace is not None:
            g = self.grid
            coef = self.c / (g.h * g.h)
            nu_ = (g.nx - 1) * g.ny
            bu = b[:nu_].reshape(g.nx - 1, g.ny)
            bv = b[nu_:].reshape(g.nx, g.ny - 1)
            bu = bu.copy()
            bv = bv.copy()
            bu[0, :] += coef * (-trace.left)
            bu[-1, :] += coef * trace.right
            bv[:, 0] += coef * (-trace.bottom)
            bv[:, -1] += coef * trace.top
            b = np.concatenate([bu.ravel(), bv.ravel()])
        x = self._solve(b)
        return unflatten_interior(self.grid, x, trace)


def noslip_helmholtz(grid: Grid, c: float) -> NoslipHelmholtz:
    return _cached(("noslip_helmholtz", grid.nx, grid.ny, float(c)), lambda: NoslipHelmholtz(grid, c))


def _viscous_lu(grid: Grid):
    return _cached(("noslip_viscous_lu", grid.nx, grid.ny),
                   lambda: _lu_solver(noslip_viscous_matrix(grid).tocsc()))


# ---------------------------------------------------------------------------
# Stationary Stokes solver (Uzawa-CG on the pressure Schur complement)
# ---------------------------------------------------------------------------

def _wall_rhs(grid: Grid, trace: BoundaryTrace) -> np.ndarray:
    """RHS contribution of Dirichlet wall-normal data to K z = -Lap z."""
    h2 = grid.h * grid.h
    bu = np.zeros((grid.nx - 1, grid.ny))
    bv = np.zeros((grid.nx, grid.ny - 1))
    bu[0, :] = (-trace.left) / h2
    bu[-1, :] = trace.right / h2
    bv[:, 0] = (-trace.bottom) / h2
    bv[:, -1] = trace.top / h2
    return np.concatenate([bu.ravel(), bv.ravel()])


def _check_compatibility(g: ScalarField, trace: BoundaryTrace, tol: float = 1e-10) -> None:
    vol = integral(g)
    h = g.grid.h
    flux = h * float(np.sum(trace.left) + np.sum(trace.right) + np.sum(trace.bottom) + np.sum(trace.top))
    scale = max(1.0, scalar_norm(g), trace.max_abs())
    if abs(vol - flux) > tol * scale:
        raise CompatibilityError(
            f"divergence data and boundary flux disagree: volume integral {vol:.3e} "
            f"vs boundary flux {flux:.3e}")


def stokes_solve(g: ScalarField, boundary_velocity: BoundaryTrace | None = None,
                 tol: float = 1e-9, max_iter: int = 2000):
    """Solve -Lap z + grad q = 0, div z = g, z|walls = boundary data.

    The pressure q is found by conjugate gradient on the Schur complement
    (each application one direct viscous solve), then the velocity by one
    more viscous solve.  q is returned mean-zero.  Residual contract: the
    divergence equation holds to ``tol`` relative, the momentum equation to
    factorization precision.
    """
    grid = g.grid
    trace = boundary_velocity if boundary_velocity is not None else BoundaryTrace.zeros(grid)
    _check_compatibility(g, trace)
    ksolve = _viscous_lu(grid)
    nc = grid.nx * grid.ny

    def schur_apply(qflat: np.ndarray) -> np.ndarray:
        gq = gradient(ScalarField(grid, qflat.reshape(grid.shape_cell)))
        w = unflatten_interior(grid, ksolve(flatten_interior(gq)))
        return -divergence(w).values.ravel()

    # rhs = g - D K^{-1} b_wall - fold(wall data)
    rhs = g.values.ravel().copy()
    wall_flux = divergence(unflatten_interior(grid, np.zeros((grid.nx - 1) * grid.ny + grid.nx * (grid.ny - 1)), trace))
    rhs -= wall_flux.values.ravel()
    has_wall = trace.max_abs() > 0.0
    if has_wall:
        b_wall = _wall_rhs(grid, trace)
        rhs -= divergence(unflatten_interior(grid, ksolve(b_wall))).values.ravel()
    else:
        b_wall = None

    ones = np.ones(nc)
    S = SparseOperator(nc, apply=schur_apply, nullspace=[ones])
    # The divergence residual of the returned z equals the CG residual, so
    # anchor the CG tolerance to the scale used by the final residual check.
    den = max(scalar_norm(g), trace.max_abs(), 1e-300)
    rhs_norm = np.linalg.norm(rhs)
    tol_cg = 0.5 * tol * den / (grid.h * rhs_norm) if rhs_norm > 0 else tol
    qflat, report = cg_solve(S, rhs, tol=min(tol_cg, 0.5 * tol), max_iter=max_iter)
    if not report.converged:
        raise SolverError(
            f"stokes_solve: Schur CG did not converge ({report.iterations} iterations, "
            f"residual {report.residual:.3e}, breakdown={report.breakdown})")

    gq = gradient(ScalarField(grid, qflat.reshape(grid.shape_cell)))
    zrhs = -flatten_interior(gq)
    if b_wall is not None:
        zrhs = zrhs + b_wall
    z = unflatten_interior(grid, ksolve(zrhs), trace)

    div_res = divergence(z) - g
    rel_div = scalar_norm(div_res) / den
    q = ScalarField(grid, qflat.reshape(grid.shape_cell) - qflat.mean())
    final = SolveReport(report.iterations, float(rel_div), rel_div <= tol)
    if not final.converged:
        raise SolverError(f"stokes_solve: divergence residual {rel_div:.3e} exceeds tol {tol:.1e}")
    return z, q, final


def dense_stokes_solve(g: ScalarField, boundary_velocity: BoundaryTrace | None = None):
    """Direct bordered-matrix Stokes solve; oracle for small grids (<= 16x16)."""
    grid = g.grid
    if grid.nx > 16:
        raise ValueError("dense oracle restricted to grids of at most 16x16")
    trace = boundary_velocity if boundary_velocity is not None else BoundaryTrace.zeros(grid)
    _check_compatibility(g, trace)
    nf = (grid.nx - 1) * grid.ny + grid.nx * (grid.ny - 1)
    nc = grid.nx * grid.ny
    K = noslip_viscous_matrix(grid).toarray()
    # gradient matrix, interior faces x cells, assembled column by column
    G = np.zeros((nf, nc))
    for j in range(nc):
        e = np.zeros(nc)
        e[j] = 1.0
        G[:, j] = flatten_interior(gradient(ScalarField(grid, e.reshape(grid.shape_cell))))
    b_wall = _wall_rhs(grid, trace)
    fold = divergence(unflatten_interior(grid, np.zeros(nf), trace)).values.ravel()
    gprime = g.values.ravel() - fold
    # bordered symmetric system: [K G 0; G^T 0 1; 0 1^T 0]
    M = np.zeros((nf + nc + 1, nf + nc + 1))
    M[:nf, :nf] = K
    M[:nf, nf:nf + nc] = G
    M[nf:nf + nc, :nf] = G.T
    M[nf:nf + nc, nf + nc] = 1.0
    M[nf + nc, nf:nf + nc] = 1.0
    rhs = np.zeros(nf + nc + 1)
    rhs[:nf] = b_wall
    rhs[nf:nf + nc] = -gprime
    sol = np.linalg.solve(M, rhs)
    z = unflatten_interior(grid, sol[:nf], trace)
    qv = sol[nf:nf + nc]
    q = ScalarField(grid, (qv - qv.mean()).reshape(grid.shape_cell))
    return z, q

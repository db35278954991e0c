"""Shared time-stepping core and reference incompressible-flow steppers.

The implicit viscous solve used by every flow route acts on the projected
operator: (I - c * P Lap P) with P the discrete Leray projection and Lap the
no-slip vector Laplacian.  Solving on the projected operator (rather than
projecting after an unconstrained solve) is what makes the discrete energy
ledger close exactly: pairing the update with the midpoint velocity leaves no
uncontrolled O(dt) pressure-coupling term.

Two reference steppers for the *standard* incompressible equations live here:

* ``order=2``: projected trapezoidal viscosity + Heun (midpoint-averaged)
  transport.  The lifted-flow steppers of the two extended systems reduce to
  this scheme, call by call, when their divergence data vanishes.
* ``order=1``: backward-Euler viscosity, explicit transport, projection last
  (the classical splitting).  The tangential-system direct stepper reduces to
  this one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .advection import skew_advect
from .errors import CFLError, SolverError
from .grid import Grid, VectorField, vector_laplacian
from .linsolve import (
    SparseOperator,
    _cached,
    cg_solve,
    flatten_interior,
    noslip_helmholtz,
    noslip_viscous_matrix,
    unflatten_interior,
)
from .stokes_lift import leray_project

__all__ = [
    "ForcingSpec",
    "cfl_check",
    "poincare_constant",
    "projected_viscous_solve",
    "perturbed_heun_step",
    "step_nse_projection",
]


@dataclass(frozen=True)
class ForcingSpec:
    """Closed-form body force (x, y, t) -> components, sampled on faces.

    ``fu``/``fv`` are broadcasting callables or None for the zero forcing.
    """

    fu: object = None
    fv: object = None
    name: str = "zero"

    @staticmethod
    def zero() -> "ForcingSpec":
        return ForcingSpec(None, None, "zero")

    def is_zero(self) -> bool:
        return self.fu is None and self.fv is None

    def evaluate(self, grid: Grid, t: float) -> VectorField:
        if self.is_zero():
            return VectorField.zeros(grid)
        xu = grid.xface_x()[:, None]
        yu = grid.cell_y()[None, :]
        xv = grid.cell_x()[:, None]
        yv = grid.yface_y()[None, :]
        u = np.broadcast_to(np.asarray(self.fu(xu, yu, t), dtype=np.float64), grid.shape_u)
        v = np.broadcast_to(np.asarray(self.fv(xv, yv, t), dtype=np.float64), grid.shape_v)
        return VectorField(grid, u.copy(), v.copy())


def _eval_forcing(forcing, grid: Grid, t: float) -> VectorField:
    if forcing is None:
        return VectorField.zeros(grid)
    return forcing.evaluate(grid, t)


def cfl_check(u: VectorField, dt: float) -> None:
    """Advective step-size guard: dt <= h / (2 max |u|)."""
    vmax = u.max_abs()
    if vmax == 0.0:
        return
    limit = u.grid.h / (2.0 * vmax)
    if dt > limit:
        raise CFLError(
            f"time step {dt:.3e} exceeds the advective limit {limit:.3e} "
            f"(max speed {vmax:.3e}, h = {u.grid.h:.3e})")


def poincare_constant(grid: Grid) -> float:
    """Smallest eigenvalue of the no-slip vector Dirichlet energy.

    ||grad w||^2 >= lambda * ||w||^2 for every zero-wall field w; this is a
    guaranteed lower bound for the divergence-free (Stokes) ground eigenvalue
    and is what the Gronwall envelope uses, keeping the envelope a true bound.
    """
    def build():
        K = noslip_viscous_matrix(grid).tocsc()
        vals = spla.eigsh(K, k=1, sigma=0.0, which="LM", return_eigenvectors=False)
        lam = float(vals[0])
        if not (lam > 0.0):
            raise SolverError("no-slip viscous operator lost positivity")
        return lam
    return _cached(("poincare", grid.nx, grid.ny), build)


def projected_viscous_solve(grid: Grid, c: float, rhs: VectorField,
                            tol: float = 1e-12) -> VectorField:
    """Solve (I - c * P Lap_noslip P) x = P rhs by conjugate gradient.

    The operator is symmetric positive definite on the whole interior-face
    space and acts as the identity on the complement of range(P), so with a
    projected right-hand side the solution lies in range(P): discretely
    divergence-free with zero wall-normal flux.  c = 0 returns P rhs.
    """
    b = flatten_interior(leray_project(rhs))
    if c == 0.0:
        return unflatten_interior(grid, b)

    def apply(x: np.ndarray) -> np.ndarray:
        xf = unflatten_interior(grid, x)
        px = leray_project(xf)
        lap = vector_laplacian(px, "noslip")
        return x - c * flatten_interior(leray_project(lap))

    n = (grid.nx - 1) * grid.ny + grid.nx * (grid.ny - 1)
    op = SparseOperator(n, apply=apply)
    x, rep = cg_solve(op, b, tol=tol, max_iter=400)
    if not rep.converged:
        raise SolverError(
            f"projected viscous solve failed: {rep.iterations} iterations, "
            f"residual {rep.residual:.3e}")
    return unflatten_interior(grid, x)


def perturbed_heun_step(v: VectorField, z0: VectorField, z1: VectorField,
                        dt: float, nu: float, f_mid: VectorField,
                        tol: float = 1e-12) -> VectorField:
    """One step of the lifted-flow equation for the divergence-free part v.

    dv/dt = P[ nu Lap v + f - dz/dt - ((v+z).grad)(v+z) ] with z held on the
    midpoint (z0 + z1)/2 and dz/dt = (z1 - z0)/dt; trapezoidal viscosity with
    a Heun (predictor-averaged) transport term, solved on range(P).
    """
    g = v.grid
    c = 0.5 * nu * dt
    zbar = (z0 + z1) * 0.5
    dz = (z1 - z0) * (1.0 / dt)
    lap_v = vector_laplacian(v, "noslip")

    def slope(w: VectorField) -> VectorField:
        wz = w + zbar
        return f_mid - dz - skew_advect(wz, wz)

    a1 = slope(v)
    v1 = projected_viscous_solve(g, c, v + a1 * dt + lap_v * c, tol=tol)
    a2 = slope(v1)
    return projected_viscous_solve(g, c, v + (a1 + a2) * (dt * 0.5) + lap_v * c, tol=tol)


def step_nse_projection(u: VectorField, t: float, dt: float, nu: float,
                        forcing: ForcingSpec | None = None, order: int = 2) -> VectorField:
    """Reference stepper for the standard incompressible equations.

    Input must be discretely divergence-free with zero wall faces.  order=2
    is the projected trapezoidal/Heun scheme; order=1 the classical splitting
    (backward-Euler viscosity, explicit transport, projection last).
    """
    cfl_check(u, dt)
    g = u.grid
    if order == 1:
        a = skew_advect(u, u)
        f = _eval_forcing(forcing, g, t)
        w = noslip_helmholtz(g, nu * dt).solve(u + (f - a) * dt)
        return leray_project(w)
    if order != 2:
        raise ValueError(f"unknown order {order!r} (expected 1 or 2)")
    f_mid = _eval_forcing(forcing, g, t + 0.5 * dt)
    c = 0.5 * nu * dt
    lap_u = vector_laplacian(u, "noslip")
    a1 = f_mid - skew_advect(u, u)
    v1 = projected_viscous_solve(g, c, u + a1 * dt + lap_u * c)
    a2 = f_mid - skew_advect(v1, v1)
    return projected_viscous_solve(g, c, u + (a1 + a2) * (dt * 0.5) + lap_u * c)

"""Centered advective transport on the staggered grid and its exact skew part.

``advect(w, b)`` is the advective-form transport (w . grad) b evaluated on
interior faces (wall faces of the result are zero).  Cross components of the
advecting velocity are four-point averages onto the target face; tangential
derivatives next to a wall use the odd-reflection closure consistent with
zero tangential velocity at walls.  Wall values of both arguments are read as
data.

``adjoint_advect(w, c)`` is the exact transpose of ``advect(w, .)`` in the
uniform face inner product, derived stencil by stencil (including the
odd-reflection feedback and the wall-face couplings), so that

    <advect(w, b), c> = <b, adjoint_advect(w, c)>   for all b, c.

``skew_advect`` is the skew-symmetric half-difference; its trilinear form is
antisymmetric in the last two slots for every advecting field w, which is
what makes discrete energy ledgers close without any divergence condition.
"""

from __future__ import annotations

import numpy as np

from .grid import VectorField, face_inner

__all__ = ["advect", "adjoint_advect", "skew_advect", "trilinear"]


def _wy_at_interior_ufaces(w: VectorField) -> np.ndarray:
    # four-point average of v onto x-faces i=1..nx-1, all j; shape (nx-1, ny)
    v = w.v
    return 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])


def _wx_at_interior_vfaces(w: VectorField) -> np.ndarray:
    # four-point average of u onto y-faces j=1..ny-1, all i; shape (nx, ny-1)
    u = w.u
    return 0.25 * (u[:-1, :-1] + u[:-1, 1:] + u[1:, :-1] + u[1:, 1:])


def advect(w: VectorField, b: VectorField) -> VectorField:
    """Advective form (w . grad) b on interior faces; wall faces are zero."""
    g = w.grid
    if b.grid != g:
        raise ValueError("advect: operands live on different grids")
    h2 = 2.0 * g.h
    au = np.zeros(g.shape_u)
    av = np.zeros(g.shape_v)

    # u-component rows (interior x-faces)
    dxu = (b.u[2:, :] - b.u[:-2, :]) / h2
    ub = np.concatenate([-b.u[1:-1, :1], b.u[1:-1, :], -b.u[1:-1, -1:]], axis=1)
    dyu = (ub[:, 2:] - ub[:, :-2]) / h2
    au[1:-1, :] = w.u[1:-1, :] * dxu + _wy_at_interior_ufaces(w) * dyu

    # v-component rows (interior y-faces)
    dyv = (b.v[:, 2:] - b.v[:, :-2]) / h2
    vb = np.concatenate([-b.v[:1, 1:-1], b.v[:, 1:-1], -b.v[-1:, 1:-1]], axis=0)
    dxv = (vb[2:, :] - vb[:-2, :]) / h2
    av[:, 1:-1] = _wx_at_interior_vfaces(w) * dxv + w.v[:, 1:-1] * dyv

    return VectorField(g, au, av)


def adjoint_advect(w: VectorField, c: VectorField) -> VectorField:
    """Exact transpose of ``advect(w, .)``; wall faces of the result carry
    the couplings through which ``advect`` reads wall data."""
    g = w.grid
    if c.grid != g:
        raise ValueError("adjoint_advect: operands live on different grids")
    h2 = 2.0 * g.h

    # u-component output
    p = np.zeros(g.shape_u)
    p[1:-1, :] = w.u[1:-1, :] * c.u[1:-1, :]
    pp = np.pad(p, ((1, 1), (0, 0)))
    atu = (pp[:-2, :] - pp[2:, :]) / h2
    q = _wy_at_interior_ufaces(w) * c.u[1:-1, :]
    qq = np.pad(q, ((0, 0), (1, 1)), mode="edge")
    atu[1:-1, :] += (qq[:, :-2] - qq[:, 2:]) / h2

    # v-component output
    p2 = np.zeros(g.shape_v)
    p2[:, 1:-1] = w.v[:, 1:-1] * c.v[:, 1:-1]
    pp2 = np.pad(p2, ((0, 0), (1, 1)))
    atv = (pp2[:, :-2] - pp2[:, 2:]) / h2
    q2 = _wx_at_interior_vfaces(w) * c.v[:, 1:-1]
    qq2 = np.pad(q2, ((1, 1), (0, 0)), mode="edge")
    atv[:, 1:-1] += (qq2[:-2, :] - qq2[2:, :]) / h2

    return VectorField(g, atu, atv)


def skew_advect(w: VectorField, b: VectorField) -> VectorField:
    """Skew-symmetric transport: half the difference of form and transpose.

    <skew_advect(w, b), c> = -<skew_advect(w, c), b> for all w, b, c, hence
    <skew_advect(w, b), b> = 0 identically.
    """
    fwd = advect(w, b)
    bwd = adjoint_advect(w, b)
    return VectorField(w.grid, 0.5 * (fwd.u - bwd.u), 0.5 * (fwd.v - bwd.v))


def trilinear(w: VectorField, b: VectorField, c: VectorField) -> float:
    """The trilinear energy-exchange form <skew_advect(w, b), c>."""
    return face_inner(skew_advect(w, b), c)

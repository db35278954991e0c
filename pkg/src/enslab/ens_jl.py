"""No-slip extended flow system: two independent stepping routes.

The system evolves a velocity with zero wall faces whose divergence obeys a
Neumann heat equation instead of vanishing.  Route one ("decomposed") mirrors
the constructive splitting: advance the divergence by the heat oracle, lift it
to a velocity by the Stokes lifting, and advance the remaining divergence-free
part by a projected perturbed-flow step.  Route two ("direct") advances the
velocity itself with a backward-Euler implicit treatment of both the viscous
term and the divergence-gradient term, splitting the field into its projected
part and the gradient potential that carries the divergence.

The energy checker certifies, per step, the exact discrete ledger

    (||v+||^2 - ||v||^2) / (2 dt) + nu * ||grad vbar||^2  =  pairing terms

and accumulates a Gronwall-style envelope from measured per-step constants;
every inequality used in the envelope holds for the measured quantities, so
the envelope is a true bound for the computed trajectory, not a fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .advection import skew_advect
from .diagnostics import DiagnosticsRecord
from .errors import CheckFailure
from .grid import (
    Grid,
    ScalarField,
    VectorField,
    divergence,
    face_inner,
    face_norm,
    grad_inner,
    gradient,
    laplacian_neumann,
    normal_trace,
    scalar_norm,
    vector_laplacian,
)
from .heat_oracle import DivergenceState, divergence_state, heat_step
from .linsolve import heat_solver, neumann_poisson
from .reference import (
    ForcingSpec,
    _eval_forcing,
    cfl_check,
    perturbed_heun_step,
    poincare_constant,
    projected_viscous_solve,
)
from .stokes_lift import decompose, leray_project, lift_divergence

__all__ = [
    "JLState",
    "ForcingSpec",
    "jl_state",
    "step_decomposed",
    "step_direct",
    "integrate",
    "check_energy_bound",
    "coercivity_probe",
    "stokes_pressure",
    "check_stokes_pressure",
]

_DIV_MATCH_RTOL = 1e-7
_LIFT_TOL = 1e-12


def _lift_floor(u: VectorField) -> float:
    """Divergence norms below this are round-off, not data, for this field."""
    return 1e-12 * max(1.0, face_norm(u) / u.grid.h)


@dataclass(frozen=True)
class JLState:
    """Velocity with heat-evolving divergence under no-slip walls.

    The decomposition cache (v, z, q) is maintained by the decomposed route:
    v is the divergence-free part, z the Stokes lifting of g, q its pressure.
    Direct-route states carry no cache.
    """

    time: float
    u: VectorField
    g: DivergenceState
    nu: float
    forcing: ForcingSpec
    v: VectorField | None = None
    z: VectorField | None = None
    q: ScalarField | None = None

    def __post_init__(self) -> None:
        if not (self.nu > 0.0 and math.isfinite(self.nu)):
            raise ValueError(f"viscosity must be positive, got {self.nu!r}")
        if self.g.bc != "neumann":
            raise ValueError(f"divergence state must be Neumann, got {self.g.bc!r}")
        if self.g.nu != self.nu:
            raise ValueError("divergence state carries a different viscosity")
        if abs(self.g.time - self.time) > 1e-12 * max(1.0, abs(self.time)):
            raise ValueError("divergence state time disagrees with state time")
        walls = normal_trace(self.u).max_abs()
        if walls > 1e-12 * max(1.0, self.u.max_abs()):
            raise CheckFailure(f"wall-normal faces must vanish (max {walls:.3e})")
        err = scalar_norm(divergence(self.u) - self.g.g)
        scale = max(scalar_norm(self.g.g), face_norm(self.u) / self.u.grid.h)
        if err > _DIV_MATCH_RTOL * scale + 1e-14:
            raise CheckFailure(
                f"velocity divergence drifted from its heat state: {err:.3e} "
                f"against scale {scale:.3e}")
        have = [f is not None for f in (self.v, self.z, self.q)]
        if any(have) and not all(have):
            raise ValueError("decomposition cache must be all present or absent")
        if self.v is not None:
            gap = (self.u - (self.v + self.z)).max_abs()
            if gap > 1e-13 * max(1.0, self.u.max_abs()):
                raise CheckFailure(
                    f"decomposition cache does not reconstruct the velocity ({gap:.3e})")

    @property
    def decomposed(self) -> bool:
        return self.v is not None


def jl_state(u: VectorField, nu: float, forcing: ForcingSpec | None = None,
             time: float = 0.0, decomposed: bool = True) -> JLState:
    """Build a consistent state from a velocity field with zero wall faces."""
    forcing = forcing if forcing is not None else ForcingSpec.zero()
    g = divergence_state(divergence(u), "neumann", nu, time=time)
    if not decomposed:
        return JLState(time, u, g, nu, forcing)
    dec = decompose(u)
    return JLState(time, u, g, nu, forcing, dec.v, dec.z, dec.q)


def _advance_lift(state: JLState, gp: DivergenceState):
    """Lift the advanced divergence, skipping the solve for round-off data."""
    grid = state.u.grid
    if scalar_norm(gp.g) <= _lift_floor(state.u):
        return VectorField.zeros(grid), ScalarField.zeros(grid)
    z, q = lift_divergence(gp.g, tol=_LIFT_TOL)
    return z, q


def step_decomposed(s: JLState, dt: float) -> JLState:
    """One step of the constructive route: heat oracle, lift, projected flow.

    The divergence-free part is advanced by a trapezoidal-viscosity step with
    midpoint-averaged transport, solved on the projected operator, so the
    per-step energy ledger closes to O(dt^2).
    """
    if not (dt > 0.0):
        raise ValueError(f"time step must be positive, got {dt!r}")
    if not s.decomposed:
        raise ValueError("decomposed route requires the decomposition cache; "
                         "build the state with jl_state(u, nu, ...)")
    cfl_check(s.u, dt)
    gp = heat_step(s.g, dt)
    zp, qp = _advance_lift(s, gp)
    f_mid = _eval_forcing(s.forcing, s.u.grid, s.time + 0.5 * dt)
    vp = perturbed_heun_step(s.v, s.z, zp, dt, s.nu, f_mid, tol=1e-12)
    return JLState(s.time + dt, vp + zp, gp, s.nu, s.forcing, vp, zp, qp)


def step_direct(s: JLState, dt: float) -> JLState:
    """One step of the direct route: implicit viscosity and divergence gradient.

    The momentum equation is split along the projection: the divergence rides
    a backward-Euler Neumann heat step (taking the divergence of the update
    gives exactly that), its gradient potential is reconstructed, and the
    projected part sees explicit transport with implicit projected viscosity.
    The pressure-potential content of the update equals the backward-Euler
    value of the gradient part; the recovered potential itself is available
    through stokes_pressure().
    """
    if not (dt > 0.0):
        raise ValueError(f"time step must be positive, got {dt!r}")
    cfl_check(s.u, dt)
    grid = s.u.grid
    u = s.u
    a = skew_advect(u, u)
    f = _eval_forcing(s.forcing, grid, s.time)
    du = divergence(u)
    gp_vals = heat_solver(grid, s.nu * dt, "neumann", theta="be")(du.values)
    gp_field = ScalarField(grid, gp_vals)
    phi = neumann_poisson(grid).solve(gp_field)
    gphi = gradient(phi)
    lap_gphi = vector_laplacian(gphi, "noslip")
    rhs = u + (f - a) * dt + lap_gphi * (s.nu * dt)
    y = projected_viscous_solve(grid, s.nu * dt, rhs, tol=1e-12)
    gp = DivergenceState(gp_field, s.time + dt, "neumann", s.nu, s.g.m0)
    return JLState(s.time + dt, y + gphi, gp, s.nu, s.forcing)


def integrate(state: JLState, dt: float, nsteps: int, route: str = "decomposed") -> list[JLState]:
    """Advance nsteps and return the full history including the initial state."""
    if route == "decomposed":
        step = step_decomposed
    elif route == "direct":
        step = step_direct
    else:
        raise ValueError(f"unknown route {route!r} (expected 'decomposed' or 'direct')")
    history = [state]
    for _ in range(nsteps):
        history.append(step(history[-1], dt))
    return history


def check_energy_bound(history: list[JLState]) -> DiagnosticsRecord:
    """Per-step energy ledger and a measured-constant Gronwall envelope.

    For each step the exact identity

        (E+ - E)/(2 dt) + nu ||grad vbar||^2
            = <f - dz, vbar> - <zz + vz + zv pairings> + imbalance

    is evaluated with vbar, zbar the endpoint averages; the imbalance is the
    time-quadrature defect of the scheme, O(dt^2).  The envelope recursion

        B+ = (B (1 + dt c) + dt Q) / (1 - dt c),
        c = |advection pairings| / ||vbar||^2,
        Q = ||f - dz||^2 / (nu lambda_P) + 2 |imbalance|

    uses only measured quantities and a proven lower bound lambda_P for the
    gradient energy, so energies satisfy E_n <= B_n exactly (up to round-off
    of the recursion itself).
    """
    if len(history) < 2:
        raise ValueError("need at least two states to check the ledger")
    for s in history:
        if not s.decomposed:
            raise ValueError("energy check requires the decomposed-route cache")
    grid = history[0].u.grid
    nu = history[0].nu
    forcing = history[0].forcing
    lam = poincare_constant(grid)

    energies = [face_inner(s.v, s.v) for s in history]
    envelope = [energies[0]]
    imbalances = []
    margins = []
    c_max = 0.0
    dissipation = 0.0
    forcing_integral = 0.0
    gradz_integral = 0.0
    increase_max = 0.0

    for s0, s1 in zip(history[:-1], history[1:]):
        dt = s1.time - s0.time
        if not (dt > 0.0):
            raise ValueError("history times must increase")
        vbar = (s0.v + s1.v) * 0.5
        zbar = (s0.z + s1.z) * 0.5
        dz = (s1.z - s0.z) * (1.0 / dt)
        f_mid = _eval_forcing(forcing, grid, s0.time + 0.5 * dt)
        fhat = f_mid - dz

        e0 = face_inner(s0.v, s0.v)
        e1 = face_inner(s1.v, s1.v)
        diss = grad_inner(vbar, vbar)
        lhs = (e1 - e0) / (2.0 * dt) + nu * diss

        pair_f = face_inner(fhat, vbar)
        pair_zz = face_inner(skew_advect(zbar, zbar), vbar)
        pair_vz = face_inner(skew_advect(vbar, zbar), vbar)
        pair_zv = face_inner(skew_advect(zbar, vbar), vbar)
        adv = pair_zz + pair_vz + pair_zv
        rhs = pair_f - adv
        d = lhs - rhs
        imbalances.append(d)
        margins.append(rhs - lhs)

        ebar = face_inner(vbar, vbar)
        c = abs(adv) / ebar if ebar > 0.0 else 0.0
        c_max = max(c_max, c)
        fh2 = face_inner(fhat, fhat)
        q = fh2 / (nu * lam) + 2.0 * abs(d)
        if dt * c >= 1.0:
            raise CheckFailure(
                f"measured advection constant {c:.3e} too large for dt {dt:.3e}; "
                "the envelope recursion cannot certify this step")
        envelope.append((envelope[-1] * (1.0 + dt * c) + dt * q) / (1.0 - dt * c))

        dissipation += dt * nu * diss
        forcing_integral += dt * fh2
        gradz_integral += dt * grad_inner(zbar, zbar)
        increase_max = max(increase_max, math.sqrt(e1) - math.sqrt(e0))

    env_margins = [b - e for b, e in zip(envelope, energies)]
    metrics = {
        "energy_initial": energies[0],
        "energy_final": energies[-1],
        "dissipation_integral": dissipation,
        "envelope_final": envelope[-1],
        "envelope_margin_min": min(env_margins),
        "imbalance_max": max(abs(d) for d in imbalances),
        "ledger_margin_min": min(margins),
        "advection_constant_max": c_max,
        "forcing_integral": forcing_integral,
        "gradz_integral": gradz_integral,
        "energy_increase_max": increase_max,
    }
    return DiagnosticsRecord(history[-1].time, metrics, "ens_jl.check_energy_bound")


def coercivity_probe(u: VectorField) -> DiagnosticsRecord:
    """Evaluate the quadratic-form remainder that breaks zero-wall coercivity.

    remainder(u) = -<u, P Lap u + grad div u> - ||grad Pu||^2 - ||div u||^2.

    For divergence-free u the remainder vanishes; in general it equals the
    gradient-pairing between the projected part and the potential part, whose
    sign is indefinite.
    """
    walls = normal_trace(u).max_abs()
    if walls > 1e-12 * max(1.0, u.max_abs()):
        raise ValueError(f"probe requires zero wall faces (max {walls:.3e})")
    pu = leray_project(u)
    du = divergence(u)
    lap = vector_laplacian(u, "noslip")
    quad = -face_inner(u, leray_project(lap) + gradient(du))
    remainder = quad - grad_inner(pu, pu) - scalar_norm(du) ** 2
    scale = max(grad_inner(u, u), 1e-300)
    metrics = {
        "remainder": remainder,
        "relative": remainder / scale,
        "sign": float(np.sign(remainder)),
        "gradient_energy": grad_inner(u, u),
    }
    return DiagnosticsRecord(0.0, metrics, "ens_jl.coercivity_probe")


def stokes_pressure(u: VectorField) -> ScalarField:
    """Mean-zero potential of the non-projected part of (Lap u - grad div u).

    Its gradient is the complement-of-projection of the extended viscous
    term; taking the divergence of that term and inverting the Neumann
    Laplacian recovers the potential directly.
    """
    walls = normal_trace(u).max_abs()
    if walls > 1e-12 * max(1.0, u.max_abs()):
        raise ValueError(f"pressure recovery requires zero wall faces (max {walls:.3e})")
    w = vector_laplacian(u, "noslip") - gradient(divergence(u))
    return neumann_poisson(u.grid).solve(divergence(w))


def check_stokes_pressure(u: VectorField) -> DiagnosticsRecord:
    """Interior harmonicity of the recovered pressure potential.

    The cell Laplacian of the potential reproduces its construction data
    everywhere; the harmonicity content lives on interior cells, where the
    data is a genuine commutator.  Wall-adjacent cells carry O(1/h) flux data
    by construction and are reported separately, not asserted against.
    """
    p = stokes_pressure(u)
    lap = laplacian_neumann(p)
    grid = u.grid
    full = scalar_norm(lap)
    interior = grid.h * float(np.linalg.norm(lap.values[1:-1, 1:-1]))
    metrics = {
        "residual_interior": interior,
        "residual_full": full,
        "relative": interior / max(full, 1e-300),
    }
    return DiagnosticsRecord(0.0, metrics, "ens_jl.check_stokes_pressure")

"""Command-line drivers: runs, studies, and all artifact writing.

Every subcommand reads one config file, writes artifacts under the output
directory (per-step CSV, final field dumps, a margin summary), and maps
failures to exit codes: 1 config, 2 solver (including step-size guards),
3 check failure.  A check failure still writes whatever artifacts exist.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import ens_jl, ens_sr, fieldio, galerkin, scenarios
from .config import Config, ConfigError, load_config
from .diagnostics import convergence_order, fit_decay_rate, norms, passes
from .errors import CheckFailure, SolverError
from .grid import (
    Grid,
    divergence,
    face_inner,
    face_norm,
    grad_inner,
    normal_trace,
    scalar_norm,
)
from .heat_oracle import check_heat_estimates, divergence_state, heat_run
from .stokes_lift import decompose

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_CHECK = 3

_DIV_FREE_PRESETS = ("zero", "vortex", "boundary_flux", "mms", "random_solenoidal")
_STABILITY_EPS = (1e-3, 1e-4, 1e-5)


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _thread_cap(n_tasks: int) -> int:
    raw = os.environ.get("ENSLAB_THREADS", "")
    if raw.strip():
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"ENSLAB_THREADS must be an integer, got {raw!r}")
        if cap < 1:
            raise ConfigError(f"ENSLAB_THREADS must be at least 1, got {cap}")
        return min(cap, n_tasks)
    return min(os.cpu_count() or 1, n_tasks)


def _fan_out(tasks):
    """Run thunks in parallel (ENSLAB_THREADS caps width); re-raise first error."""
    if len(tasks) == 1:
        return [tasks[0]()]
    with ThreadPoolExecutor(max_workers=_thread_cap(len(tasks))) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def _initial_velocity(cfg: Config, grid: Grid):
    return scenarios.initial_velocity(
        grid, cfg.system, cfg.ic, eps=cfg.ic_eps, mode=cfg.ic_mode,
        amplitude=cfg.ic_amplitude, seed=cfg.seed)


def _field_metrics(cfg: Config, state) -> dict:
    u = state.u
    div = divergence(u)
    m = {
        "u_l2": face_norm(u),
        "energy": 0.5 * face_norm(u) ** 2,
        "div_l2": scalar_norm(div),
        "div_linf": float(np.abs(div.values).max()),
        "g_l2": scalar_norm(state.g.g),
    }
    if cfg.system == "jl":
        m["u_h1_semi"] = math.sqrt(max(grad_inner(u, u), 0.0))
    else:
        m["wall_gap_linf"] = state.h.trace.blend(1.0, normal_trace(u), -1.0).max_abs()
        m["solvability_gap"] = ens_sr.solvability_gap(state.g, state.h)
        m["h_linf"] = state.h.trace.max_abs()
    if state.decomposed:
        m["v_l2"] = face_norm(state.v)
        m["z_l2"] = face_norm(state.z)
    return m


def _simulate_field(cfg: Config, u0=None):
    """Step the configured system; returns (history, failure message or None).

    Solver errors (step-size guard, linear solver breakdown) propagate;
    runtime check failures are caught so artifacts can still be written.
    """
    grid = Grid(cfg.grid)
    if u0 is None:
        u0 = _initial_velocity(cfg, grid)
    fspec = scenarios.forcing_spec(cfg.forcing, cfg.forcing_amplitude, cfg.nu)
    decomposed = cfg.route == "decomposed"
    history = []
    try:
        if cfg.system == "jl":
            state = ens_jl.jl_state(u0, cfg.nu, fspec, decomposed=decomposed)
            stepper = ens_jl.step_decomposed if decomposed else ens_jl.step_direct
        else:
            state = ens_sr.sr_state(u0, cfg.lam, cfg.nu, fspec, decomposed=decomposed)
            stepper = ens_sr.step_constructive if decomposed else ens_sr.step_direct_sr
        history.append(state)
        for _ in range(cfg.nsteps):
            history.append(stepper(history[-1], cfg.dt))
    except CheckFailure as exc:
        return history, f"{type(exc).__name__}: {exc}"
    return history, None


def _field_margins(cfg: Config, history, rows, failure) -> list:
    entries = [("run_completed", 0.0 if failure else 1.0, failure is None)]
    if not rows:
        return entries
    if cfg.ic in _DIV_FREE_PRESETS:
        worst = max(m["div_linf"] for _, m in rows)
        entries.append(("divergence_ceiling", 1e-9 - worst, worst <= 1e-9))
    if cfg.system == "jl" and cfg.route == "decomposed" and not failure and len(history) >= 2:
        rec = ens_jl.check_energy_bound(history)
        scale = max(rec["envelope_final"], rec["energy_initial"], 1.0)
        margin = rec["envelope_margin_min"]
        entries.append(("energy_envelope_min", margin, passes(margin, scale)))
    if cfg.system == "sr":
        gaps = [abs(m["solvability_gap"]) for _, m in rows]
        decay = math.exp(-cfg.lam * cfg.dt)
        excess = max(g - gaps[0] * decay ** n for n, g in enumerate(gaps))
        g0 = history[0].g.g if history else None
        scale = max(1.0, scalar_norm(g0), rows[0][1]["h_linf"]) if g0 is not None else 1.0
        entries.append(("gap_decay_excess", 1e-9 * scale - excess,
                        excess <= 1e-9 * scale))
        worst_wall = max(m["wall_gap_linf"] for _, m in rows)
        wall_scale = max(1.0, max(m["u_l2"] for _, m in rows))
        entries.append(("wall_follow", 1e-8 * wall_scale - worst_wall,
                        worst_wall <= 1e-8 * wall_scale))
    return entries


def _write_run_artifacts(cfg: Config, out_dir: str, history, rows, entries,
                         failure) -> int:
    fieldio.ensure_dir(out_dir)
    if rows:
        fieldio.write_csv(os.path.join(out_dir, "diagnostics.csv"), rows)
    if history:
        final = history[-1]
        fieldio.write_vector(os.path.join(out_dir, "final_u"), final.u, final.time)
        if hasattr(final, "g"):
            fieldio.write_scalar(os.path.join(out_dir, "final_g.ensf"),
                                 final.g.g, final.time)
    ok = fieldio.write_summary(os.path.join(out_dir, "summary.txt"), entries)
    if failure or not ok:
        return EXIT_CHECK
    return EXIT_OK


def _run_field(cfg: Config, out_dir: str, u0=None) -> int:
    history, failure = _simulate_field(cfg, u0=u0)
    rows = [(s.time, _field_metrics(cfg, s)) for s in history]
    entries = _field_margins(cfg, history, rows, failure)
    code = _write_run_artifacts(cfg, out_dir, history, rows, entries, failure)
    if failure:
        print(f"check failure: {failure}", file=sys.stderr)
    return code


def _build_basis_checked(grid: Grid, modes: int):
    try:
        return galerkin.build_basis(grid, modes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _run_galerkin(cfg: Config, out_dir: str) -> int:
    grid = Grid(cfg.grid)
    u0 = _initial_velocity(cfg, grid)
    basis = _build_basis_checked(grid, cfg.modes)
    start = galerkin.project_onto_basis(basis, u0)
    fspec = scenarios.forcing_spec(cfg.forcing, cfg.forcing_amplitude, cfg.nu)
    f_path = None if fspec.is_zero() else (lambda t: fspec.evaluate(grid, t))
    horizon = cfg.nsteps * cfg.dt
    failure = None
    try:
        trajectory = galerkin.integrate_galerkin(
            basis, start, cfg.nu, cfg.dt, horizon, f_path=f_path)
    except CheckFailure as exc:
        trajectory = [start]
        failure = f"{type(exc).__name__}: {exc}"
    rows = []
    for s in trajectory:
        coeff_l2 = math.sqrt(float(s.coeffs @ s.coeffs))
        rows.append((s.time, {
            "coeff_l2": coeff_l2,
            "energy": 0.5 * coeff_l2 ** 2,
            "grad_energy": float(basis.lam @ (s.coeffs * s.coeffs)),
        }))
    entries = [("run_completed", 0.0 if failure else 1.0, failure is None)]
    if not failure and len(trajectory) >= 3:
        rec = galerkin.galerkin_energy_ledger(
            basis, trajectory, cfg.nu, cfg.dt, f_path=f_path)
        rate = rec.metrics["imbalance_rate_max"]
        entries.append(("ledger_rate", 1e-6 - rate, rate <= 1e-6))
        if fspec.is_zero():
            energies = [m["energy"] for _, m in rows]
            worst_rise = max(b - a for a, b in zip(energies, energies[1:]))
            entries.append(("energy_monotone", -worst_rise, passes(-worst_rise, energies[0])))
    fieldio.ensure_dir(out_dir)
    fieldio.write_csv(os.path.join(out_dir, "diagnostics.csv"), rows)
    final_field = galerkin.reconstruct(basis, trajectory[-1])
    fieldio.write_vector(os.path.join(out_dir, "final_u"), final_field,
                         trajectory[-1].time)
    ok = fieldio.write_summary(os.path.join(out_dir, "summary.txt"), entries)
    if failure:
        print(f"check failure: {failure}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK if ok else EXIT_CHECK


def cmd_run(cfg: Config, quiet: bool) -> int:
    out_dir = cfg.out
    _say(quiet, f"run: system={cfg.system} route={cfg.route} grid={cfg.grid} "
                f"nu={cfg.nu:g} dt={cfg.dt:g} steps={cfg.nsteps}")
    if cfg.route == "galerkin":
        code = _run_galerkin(cfg, out_dir)
    else:
        code = _run_field(cfg, out_dir)
    _say(quiet, f"artifacts in {out_dir} ({'PASS' if code == EXIT_OK else 'FAIL'})")
    return code


def cmd_convergence(cfg: Config, quiet: bool) -> int:
    if cfg.ic != "mms" or cfg.forcing != "mms":
        raise ConfigError("convergence study needs ic = mms and forcing = mms "
                          "(exact steady reference)")
    if cfg.grid > 64:
        raise ConfigError("convergence study refines twice; grid must be <= 64")
    grids = [cfg.grid, cfg.grid * 2, cfg.grid * 4]
    subdirs = [os.path.join(cfg.out, f"grid_{n:03d}") for n in grids]
    sub_cfgs = [replace(cfg, grid=n, dt=cfg.dt * cfg.grid / n, out=d)
                for n, d in zip(grids, subdirs)]

    def one(sub: Config):
        history, failure = _simulate_field(sub)
        rows = [(s.time, _field_metrics(sub, s)) for s in history]
        entries = _field_margins(sub, history, rows, failure)
        code = _write_run_artifacts(sub, sub.out, history, rows, entries, failure)
        if failure:
            return code, float("nan")
        exact = scenarios.mms_velocity(Grid(sub.grid))
        return code, face_norm(history[-1].u - exact)

    results = _fan_out([lambda s=s: one(s) for s in sub_cfgs])
    codes = [c for c, _ in results]
    errors = [e for _, e in results]
    fieldio.ensure_dir(cfg.out)
    fieldio.write_csv(os.path.join(cfg.out, "errors.csv"),
                      [(float(n), {"h": 1.0 / n, "error_l2": e})
                       for n, e in zip(grids, errors)])
    entries = [("runs_completed", 1.0 if max(codes) == EXIT_OK else 0.0,
                max(codes) == EXIT_OK)]
    if all(math.isfinite(e) and e > 0.0 for e in errors):
        est = convergence_order(*errors)
        _say(quiet, f"errors {errors[0]:.3e} / {errors[1]:.3e} / {errors[2]:.3e}  "
                    f"orders {est.order_coarse:.3f}, {est.order_fine:.3f}")
        entries.append(("order_mean_above_1.8", est.mean - 1.8, est.mean >= 1.8))
        entries.append(("errors_monotone", 1.0 if est.monotone else 0.0, est.monotone))
    ok = fieldio.write_summary(os.path.join(cfg.out, "summary.txt"), entries)
    return EXIT_OK if (ok and max(codes) == EXIT_OK) else max(max(codes), EXIT_CHECK)


def cmd_compare(cfg: Config, quiet: bool) -> int:
    cfg_a = replace(cfg, route="decomposed", out=os.path.join(cfg.out, "route_a"))
    cfg_b = replace(cfg, route="direct", out=os.path.join(cfg.out, "route_b"))

    def one(sub: Config):
        history, failure = _simulate_field(sub)
        rows = [(s.time, _field_metrics(sub, s)) for s in history]
        entries = _field_margins(sub, history, rows, failure)
        code = _write_run_artifacts(sub, sub.out, history, rows, entries, failure)
        return code, history

    (code_a, hist_a), (code_b, hist_b) = _fan_out(
        [lambda: one(cfg_a), lambda: one(cfg_b)])
    n = min(len(hist_a), len(hist_b))
    rows = []
    for sa, sb in zip(hist_a[:n], hist_b[:n]):
        gap = face_norm(sa.u - sb.u)
        ref = max(face_norm(sa.u), 1e-300)
        rows.append((sa.time, {"gap_l2": gap, "gap_rel": gap / ref}))
    fieldio.ensure_dir(cfg.out)
    if rows:
        fieldio.write_csv(os.path.join(cfg.out, "compare.csv"), rows)
    both_ok = max(code_a, code_b) == EXIT_OK
    entries = [("routes_completed", 1.0 if both_ok else 0.0, both_ok)]
    if rows and both_ok:
        final_rel = rows[-1][1]["gap_rel"]
        _say(quiet, f"route gap at T: {rows[-1][1]['gap_l2']:.3e} "
                    f"(relative {final_rel:.3e})")
        entries.append(("route_gap_rel_sane", 1.0 - final_rel, final_rel <= 1.0))
    ok = fieldio.write_summary(os.path.join(cfg.out, "summary.txt"), entries)
    codes = [code_a, code_b, EXIT_OK if ok else EXIT_CHECK]
    return max(codes)


def cmd_stability(cfg: Config, quiet: bool) -> int:
    grid = Grid(cfg.grid)
    base_u0 = _initial_velocity(cfg, grid)
    direction = scenarios.perturbation_field(grid)
    labels = ["base"] + [f"eps_{i}" for i in range(len(_STABILITY_EPS))]
    fields = [base_u0] + [base_u0 + direction * e for e in _STABILITY_EPS]

    def one(label, u0):
        sub = replace(cfg, out=os.path.join(cfg.out, label))
        history, failure = _simulate_field(sub, u0=u0)
        rows = [(s.time, _field_metrics(sub, s)) for s in history]
        entries = _field_margins(sub, history, rows, failure)
        code = _write_run_artifacts(sub, sub.out, history, rows, entries, failure)
        return code, history

    results = _fan_out([lambda la=la, u=u: one(la, u)
                        for la, u in zip(labels, fields)])
    codes = [c for c, _ in results]
    base_hist = results[0][1]
    entries = [("runs_completed", 1.0 if max(codes) == EXIT_OK else 0.0,
                max(codes) == EXIT_OK)]
    fieldio.ensure_dir(cfg.out)
    if max(codes) == EXIT_OK:
        ratios = []
        for eps, (_, hist) in zip(_STABILITY_EPS, results[1:]):
            ratios.append(face_norm(hist[-1].u - base_hist[-1].u) / eps)
        fieldio.write_csv(os.path.join(cfg.out, "ratios.csv"),
                          [(e, {"gap_ratio": r})
                           for e, r in zip(_STABILITY_EPS, ratios)])
        spread = max(ratios) / min(ratios) - 1.0 if min(ratios) > 0.0 else float("inf")
        _say(quiet, "gap ratios " + ", ".join(f"{r:.6f}" for r in ratios)
                    + f"  spread {spread:.3%}")
        entries.append(("ratio_spread_within_10pct", 0.10 - spread, spread <= 0.10))
    ok = fieldio.write_summary(os.path.join(cfg.out, "summary.txt"), entries)
    return EXIT_OK if (ok and max(codes) == EXIT_OK) else max(max(codes), EXIT_CHECK)


def cmd_basis(cfg: Config, quiet: bool) -> int:
    if cfg.grid > 32:
        raise ConfigError("basis construction requires grid <= 32 "
                          "(dense eigensolve budget)")
    basis = _build_basis_checked(Grid(cfg.grid), cfg.modes)
    fieldio.ensure_dir(cfg.out)
    galerkin.save_basis(basis, cfg.out)
    k = basis.k
    gram = np.array([[face_inner(basis.modes[i], basis.modes[j])
                      for j in range(k)] for i in range(k)])
    gram_dev = float(np.abs(gram - np.eye(k)).max())
    div_max = max(float(np.abs(divergence(w).values).max()) for w in basis.modes)
    wall_max = max(normal_trace(w).max_abs() for w in basis.modes)
    _say(quiet, "eigenvalues: " + ", ".join(f"{v:.6g}" for v in basis.lam))
    entries = [
        ("gram_deviation", 1e-10 - gram_dev, gram_dev <= 1e-10),
        ("mode_divergence", 1e-9 - div_max, div_max <= 1e-9),
        ("mode_wall_flux", 1e-9 - wall_max, wall_max <= 1e-9),
    ]
    ok = fieldio.write_summary(os.path.join(cfg.out, "summary.txt"), entries)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_heat(cfg: Config, quiet: bool) -> int:
    if cfg.nsteps < 10:
        raise ConfigError("heat study needs at least 10 steps for the rate fit")
    grid = Grid(cfg.grid)
    bc = "neumann" if cfg.system == "jl" else "dirichlet"
    g0 = scenarios.eigen_divergence(grid, cfg.system, cfg.ic_eps, cfg.ic_mode)
    history = heat_run(divergence_state(g0, bc, cfg.nu), cfg.dt, cfg.nsteps)
    rows = [(s.time, norms(s.g, s.time).metrics) for s in history]
    fieldio.ensure_dir(cfg.out)
    fieldio.write_csv(os.path.join(cfg.out, "diagnostics.csv"), rows)
    final = history[-1]
    fieldio.write_scalar(os.path.join(cfg.out, "final_g.ensf"), final.g, final.time)
    times = [s.time for s in history]
    values = [m["l2"] for _, m in rows]
    rate = fit_decay_rate(times, values)
    analytic = -2.0 * cfg.nu * (cfg.ic_mode * math.pi) ** 2
    rel = abs(rate / analytic - 1.0)
    _say(quiet, f"fitted decay rate {rate:.6f} vs analytic {analytic:.6f} "
                f"(relative gap {rel:.2e})")
    rec = check_heat_estimates(history)
    g0_norm = rec["initial_l2"]
    entries = [
        ("decay_rate_within_1pct", 0.01 - rel, rel <= 0.01),
        ("sup_estimate", rec["sup_margin"], passes(rec["sup_margin"], g0_norm)),
        ("grad_estimate", rec["grad_margin"], passes(rec["grad_margin"], g0_norm)),
    ]
    ok = fieldio.write_summary(os.path.join(cfg.out, "summary.txt"), entries)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_decompose(cfg: Config, quiet: bool) -> int:
    grid = Grid(cfg.grid)
    u0 = _initial_velocity(cfg, grid)
    dec = decompose(u0)
    fieldio.ensure_dir(cfg.out)
    fieldio.write_vector(os.path.join(cfg.out, "part_v"), dec.v, 0.0)
    fieldio.write_vector(os.path.join(cfg.out, "part_z"), dec.z, 0.0)
    fieldio.write_scalar(os.path.join(cfg.out, "pressure_q.ensf"), dec.q, 0.0)
    div_v = scalar_norm(divergence(dec.v))
    div_scale = max(face_norm(u0) / grid.h, 1e-300)
    gv = math.sqrt(max(grad_inner(dec.v, dec.v), 0.0))
    gz = math.sqrt(max(grad_inner(dec.z, dec.z), 0.0))
    ortho = grad_inner(dec.v, dec.z)
    ortho_scale = max(gv * gz, 0.5 * max(grad_inner(u0, u0), 0.0), 1e-300)
    rec_err = (dec.v + dec.z - u0).max_abs()
    rec_scale = max(1.0, u0.max_abs())
    rows = [(0.0, {"v_l2": face_norm(dec.v), "z_l2": face_norm(dec.z),
                   "v_h1_semi": gv, "z_h1_semi": gz,
                   "div_v_l2": div_v, "grad_orthogonality": ortho})]
    fieldio.write_csv(os.path.join(cfg.out, "diagnostics.csv"), rows)
    _say(quiet, f"split: |v| {face_norm(dec.v):.6f}, |z| {face_norm(dec.z):.6f}, "
                f"gradient pairing {ortho:.2e}")
    entries = [
        ("div_v_ceiling", 1e-9 * div_scale - div_v, div_v <= 1e-9 * div_scale),
        ("grad_orthogonality", 1e-9 * ortho_scale - abs(ortho),
         abs(ortho) <= 1e-9 * ortho_scale),
        ("reconstruction", 1e-13 * rec_scale - rec_err, rec_err <= 1e-13 * rec_scale),
    ]
    ok = fieldio.write_summary(os.path.join(cfg.out, "summary.txt"), entries)
    return EXIT_OK if ok else EXIT_CHECK


_DISPATCH = {
    "run": cmd_run,
    "convergence": cmd_convergence,
    "compare": cmd_compare,
    "stability": cmd_stability,
    "basis": cmd_basis,
    "heat": cmd_heat,
    "decompose": cmd_decompose,
}


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit 1, matching config errors."""

    def error(self, message):
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="enslab",
        description="Numerical laboratory for incompressible flow with "
                    "relaxed divergence constraints on the unit square.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to a key = value config file")
    common.add_argument("--out", default=None, help="output directory (overrides config)")
    common.add_argument("--seed", type=int, default=None, help="seed override (u64)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "integrate one configured system and write diagnostics",
        "convergence": "manufactured-solution spatial-order study over three grids",
        "compare": "integrate both routes of a system and report their gap",
        "stability": "perturbation-growth ratios for a family of amplitudes",
        "basis": "build and cache the spectral velocity basis",
        "heat": "evolve divergence data under the heat oracle alone",
        "decompose": "one-shot orthogonal splitting of the initial velocity",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, out=args.out, seed=args.seed)
        return _DISPATCH[args.command](cfg, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except CheckFailure as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())

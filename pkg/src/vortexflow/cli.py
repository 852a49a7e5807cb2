"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance window missed under ``--assert``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .biot_savart import DivergenceError
from .feynman_kac import (
    EstimateRejected,
    FrozenVelocity,
    ZeroVelocity,
    mc_fourier_coefficients,
    mc_point_evaluator,
    vorticity_point_estimate,
)
from .io import write_brownian, write_snapshot
from .report import ConvergenceReport, write_report
from .snse import (
    BrownianPath,
    build_noise,
    mean_square_order_study,
    moment_monitor,
    one_step_error_probe,
    run_snse,
)
from .spectral import PeriodicGrid, SpectralField, divergence, random_field, sobolev_norm
from .stepper import (
    CFLError,
    SolverConfig,
    deterministic_convergence_study,
    frozen_linear_step,
    initial_state,
    one_step_study,
    perturbed_taylor_green,
    run_deterministic,
    stokes_exact_solution,
    taylor_green_solution,
    time_reversed,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 2, 3, 4
COMMANDS = (
    "solve-det",
    "solve-snse",
    "stokes-oracle",
    "convergence",
    "one-step-probe",
    "fk-estimate",
    "mc-fourier",
    "monitor",
)


# experiment construction -----------------------------------------------------
def build_grid(cfg) -> PeriodicGrid:
    return PeriodicGrid(cfg["grid.dim"], cfg["grid.K"], cfg["grid.L"])


def _rms_normalised(field: SpectralField, rms: float) -> SpectralField:
    g = field.grid
    norm = sobolev_norm(field)
    return field * (rms * g.L ** (g.dim / 2) / norm) if norm > 0 else field


def build_initial(cfg, grid: PeriodicGrid) -> SpectralField:
    kind, amp = cfg["initial.kind"], cfg["initial.amplitude"]
    c = 1 if grid.dim == 2 else 3
    if kind == "taylor-green":
        return taylor_green_solution(grid, 0.0, cfg["solver.sigma"])[1] * amp
    if kind == "perturbed-taylor-green":
        return perturbed_taylor_green(grid, cfg["initial.epsilon"], cfg["initial.seed"], cfg["initial.band"]) * amp
    if kind == "cosine":
        n = (1,) + (0,) * (grid.dim - 1)
        return SpectralField.from_modes(grid, {n: np.full(c, 0.5 * amp)}, components=c)
    field = random_field(grid, c, cfg["initial.seed"], band=cfg["initial.band"], divergence_free=grid.dim == 3)
    return _rms_normalised(field, amp)


def build_forcing(cfg, grid: PeriodicGrid):
    kind = cfg["forcing.kind"]
    if kind == "none":
        return None
    c = 1 if grid.dim == 2 else 3
    base = random_field(grid, c, cfg["forcing.seed"], band=cfg["forcing.band"], divergence_free=grid.dim == 3)
    base = _rms_normalised(base, cfg["forcing.amplitude"])
    if kind == "constant":
        return base
    freq = cfg["forcing.frequency"]
    return lambda t: base * math.cos(freq * t)


def build_solver(cfg, grid: PeriodicGrid, forcing=None, zero_velocity: bool = False) -> SolverConfig:
    vel_op = None
    if zero_velocity:
        vel_op = lambda c: np.zeros((grid.dim,) + c.shape[1:], dtype=np.complex128)  # noqa: E731
    return SolverConfig(
        sigma=cfg["solver.sigma"],
        horizon=cfg["solver.T"],
        outer_steps=cfg["solver.N"],
        grid=grid,
        inner_substeps=cfg["solver.M"] or None,
        dealias=cfg["solver.dealias"],
        forcing=forcing,
        velocity_operator=vel_op,
    )


def build_noise_spec(cfg, grid):
    amps = cfg["noise.amplitudes"] or (1.0,)
    return build_noise(grid, cfg["noise.modes"], amps if len(amps) > 1 else amps[0], cfg["seed"])


# output helpers ----------------------------------------------------------------
def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_table(rows: list[dict], path: Path, fmt: str) -> Path:
    path = path.with_suffix("." + fmt)
    if fmt == "json":
        clean = [{k: (float(v) if isinstance(v, np.floating) else v) for k, v in r.items()} for r in rows]
        path.write_text(json.dumps(clean, indent=2) + "\n")
        return path
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if rows:
            w.writerow(rows[0].keys())
            for r in rows:
                w.writerow([_cell(v) for v in r.values()])
    return path


def _emit_report(rep: ConvergenceReport, out: Path, name: str, fmt: str) -> None:
    path = write_report(rep, out / f"{name}.{fmt}", fmt)
    print(f"{rep.summary()}  -> {path}")


def _check(ok: bool, message: str, failures: list[str]) -> None:
    print(("PASS " if ok else "FAIL ") + message)
    if not ok:
        failures.append(message)


# subcommands -------------------------------------------------------------------
def cmd_solve_det(cfg, out, fmt, failures):
    grid = build_grid(cfg)
    solver = build_solver(cfg, grid, build_forcing(cfg, grid), zero_velocity=cfg["problem"] == "stokes")
    traj = run_deterministic(build_initial(cfg, grid), solver)
    rows = []
    for s in traj:
        div = float(np.max(np.abs(divergence(s.omega).coeffs))) if grid.dim == 3 else 0.0
        rows.append({"t": s.t, "l2_norm": sobolev_norm(s.omega), "max_div": div})
    write_table(rows, out / "trajectory", fmt)
    write_snapshot(traj[-1].omega, out / "omega_final.vortexf", traj[-1].t)
    print(f"final t={traj[-1].t:g} |w|={rows[-1]['l2_norm']:.6g}")
    if grid.dim == 3:
        worst = max(r["max_div"] for r in rows)
        _check(worst < 1e-10, f"max |div w| over all steps = {worst:.3e} < 1e-10", failures)


def cmd_solve_snse(cfg, out, fmt, failures):
    grid = build_grid(cfg)
    solver = build_solver(cfg, grid, build_forcing(cfg, grid))
    noise = build_noise_spec(cfg, grid)
    traj, path = run_snse(build_initial(cfg, grid), solver, noise, seed=cfg["seed"])
    rows = [{"t": s.t, "l2_norm": sobolev_norm(s.omega)} for s in traj]
    write_table(rows, out / "trajectory", fmt)
    write_snapshot(traj[-1].omega, out / "omega_final.vortexf", traj[-1].t)
    write_brownian(path, out / "path.brown")
    print(f"final t={traj[-1].t:g} |w|={rows[-1]['l2_norm']:.6g}")


def cmd_stokes_oracle(cfg, out, fmt, failures):
    grid = build_grid(cfg)
    T = cfg["solver.T"]
    g_fwd = build_forcing(cfg, grid)
    solver = build_solver(cfg, grid, g_fwd, zero_velocity=True)
    phi = build_initial(cfg, grid)
    phi = SpectralField(grid, phi.coeffs * solver.mask, check=False)
    got = run_deterministic(phi, solver)[-1].omega
    exact = stokes_exact_solution(phi, time_reversed(g_fwd, T), solver.sigma, 0.0, T)
    rel = sobolev_norm(got - exact) / sobolev_norm(exact)
    write_table([{"T": T, "N": solver.outer_steps, "relative_error": rel}], out / "stokes", fmt)
    _check(rel < 1e-8, f"Stokes relative error {rel:.3e} < 1e-8", failures)


def _window(cfg, default):
    return tuple(cfg["study.window"]) if cfg["study.window"] else default


def cmd_convergence(cfg, out, fmt, failures):
    grid = build_grid(cfg)
    solver = build_solver(cfg, grid, build_forcing(cfg, grid))
    phi = build_initial(cfg, grid)
    if cfg["problem"] == "snse":
        rep = mean_square_order_study(
            phi,
            solver,
            build_noise_spec(cfg, grid),
            cfg["study.step_counts"],
            cfg["study.ensemble"],
            cfg["seed"],
            cfg["study.reference_steps"],
            _window(cfg, (0.75, 1.25)),
        )
        _emit_report(rep, out, "convergence_mean_square", fmt)
        _check(rep.passed, f"mean-square order {rep.fitted_order:.3f} in {list(rep.window)}", failures)
        return
    reps = deterministic_convergence_study(
        phi, solver, cfg["study.step_counts"], cfg["study.oracle"], _window(cfg, (0.8, 1.2))
    )
    for rep, name in zip(reps, ("vorticity", "velocity")):
        _emit_report(rep, out, f"convergence_{name}", fmt)
        note = " (errors at round-off: saturated)" if rep.saturated else ""
        _check(rep.passed, f"{name} order {rep.fitted_order:.3f} in {list(rep.window)}{note}", failures)


def cmd_one_step(cfg, out, fmt, failures):
    grid = build_grid(cfg)
    solver = build_solver(cfg, grid, build_forcing(cfg, grid))
    phi = build_initial(cfg, grid)
    h_list = cfg["study.h_list"]
    if cfg["problem"] == "snse":
        probe = one_step_error_probe(
            phi,
            h_list,
            solver,
            build_noise_spec(cfg, grid),
            cfg["study.ensemble"],
            cfg["seed"],
            cfg["study.sub_increments"],
            mean_window=tuple(cfg["study.mean_window"]),
            square_window=_window(cfg, (1.3, 1.7)),
        )
        reps = [(probe.conditional_mean, "one_step_conditional_mean"), (probe.mean_square, "one_step_mean_square")]
    else:
        a, b = one_step_study(phi, solver, h_list, _window(cfg, (1.7, 2.3)))
        reps = [(a, "one_step_vorticity"), (b, "one_step_velocity")]
    for rep, name in reps:
        _emit_report(rep, out, name, fmt)
        _check(rep.passed, f"{rep.label} slope {rep.fitted_order:.3f} in {list(rep.window)}", failures)


def _fk_setup(cfg, grid):
    """Velocity provider, backward source, terminal data, oracle value and time span."""
    sigma, T, t = cfg["solver.sigma"], cfg["solver.T"], cfg["fk.t"]
    point = np.asarray(cfg["fk.point"], float)
    phi = build_initial(cfg, grid)
    if cfg["problem"] == "stokes":
        g_fwd = build_forcing(cfg, grid)
        g_bwd = time_reversed(g_fwd, T)
        exact = stokes_exact_solution(phi, g_bwd, sigma, t, T).evaluate(point[None])[0]
        if g_bwd is None:
            src = None
        elif isinstance(g_bwd, SpectralField):
            src = g_bwd
        else:
            src = lambda s, X: g_bwd(s).evaluate(X)  # noqa: E731
        return ZeroVelocity(grid.dim), src, phi, exact, t, T
    # frozen step: terminal data is the initial state, oracle is the spectral step
    solver = build_solver(cfg, grid)
    state = initial_state(phi, solver)
    h = T - t
    exact = frozen_linear_step(state, h, solver).omega.evaluate(point[None])[0]
    return FrozenVelocity.of(state.frozen_velocity), None, state.omega, exact, 0.0, h


def cmd_fk_estimate(cfg, out, fmt, failures):
    grid = build_grid(cfg)
    provider, src, phi, exact, t, T = _fk_setup(cfg, grid)
    reps = [cfg["fk.representation"]]
    if cfg["fk.compare"] != "none" and cfg["fk.compare"] not in reps:
        reps.append(cfg["fk.compare"])
    rows, ests = [], []
    for rep in reps:
        est = vorticity_point_estimate(
            provider, src, phi, cfg["fk.point"], cfg["fk.samples"], cfg["seed"], cfg["solver.sigma"], t, T,
            cfg["fk.h_sde"], rep, cfg["fk.increments"],
        )
        ests.append(est)
        for j in range(np.size(est.value)):
            rows.append({
                "representation": rep, "component": j, "value": float(est.value[j]),
                "std_error": float(est.std_error[j]), "samples": est.samples, "aborted": est.aborted,
                "exact": float(exact[j]),
            })
        _check(est.within(exact), f"{rep}: |estimate - exact| within 3 standard errors", failures)
    write_table(rows, out / "fk_estimate", fmt)
    if len(ests) == 2:
        a, b = ests
        gap = np.abs(a.value - b.value)
        tol = 3 * np.sqrt(a.std_error**2 + b.std_error**2)
        _check(bool(np.all(gap <= tol)), "representation means agree within combined 3 sigma", failures)


def cmd_mc_fourier(cfg, out, fmt, failures):
    grid = build_grid(cfg)
    phi = build_initial(cfg, grid)
    inner = cfg["mc.inner_samples"]
    if inner == 0:
        estimator, target = phi.evaluate, phi
    else:
        provider, src, phi_t, _, t, T = _fk_setup(replace_problem(cfg, "stokes"), grid)
        estimator = mc_point_evaluator(provider, src, phi_t, cfg["solver.sigma"], t, T, cfg["fk.h_sde"], inner, cfg["seed"])
        g_bwd = time_reversed(build_forcing(cfg, grid), cfg["solver.T"])
        target = stokes_exact_solution(phi_t, g_bwd, cfg["solver.sigma"], t, cfg["solver.T"])
    est = mc_fourier_coefficients(estimator, cfg["mc.modes"], grid.L, grid.dim, cfg["mc.outer_samples"], cfg["seed"])
    rows = []
    for n, e in est.items():
        for j in range(np.size(e.value)):
            ex = target.coeff(n)[j]
            rows.append({
                "n": " ".join(map(str, n)), "component": j, "re": float(e.value[j].real), "im": float(e.value[j].imag),
                "std_error": float(e.std_error[j]), "exact_re": float(ex.real), "exact_im": float(ex.imag),
            })
            _check(abs(e.value[j] - ex) <= 3 * e.std_error[j], f"mode {n}[{j}] within 3 standard errors", failures)
    write_table(rows, out / "mc_fourier", fmt)


def replace_problem(cfg, problem):
    new = cfgmod.ExperimentConfig(cfg)
    new["problem"] = problem
    return new


def cmd_monitor(cfg, out, fmt, failures):
    grid = build_grid(cfg)
    base = build_solver(cfg, grid, build_forcing(cfg, grid))
    noise = build_noise_spec(cfg, grid)
    phi = build_initial(cfg, grid)
    counts = sorted(cfg["monitor.step_counts"])
    finest = counts[-1]
    rows, sups, consts = [], [], []
    for n in counts:
        solver = replace(base, outer_steps=n)
        trajs = []
        for m in range(cfg["study.ensemble"]):
            path = BrownianPath.generate(noise.q, finest, base.horizon / finest, cfg["seed"], m)
            trajs.append(run_snse(phi, solver, noise, path=path)[0])
        mon = moment_monitor(trajs, noise, solver, cfg["monitor.p"], cfg["monitor.betas"])
        sups.append(mon.sup_moment)
        consts.append(mon.bound_constant)
        for k, t in enumerate(mon.times):
            rows.append({
                "N": n, "k": k, "t": float(t), "moment": float(mon.moment[k]), "moment_se": float(mon.moment_se[k]),
                "rhs_integral": float(mon.rhs_integral[k]),
            })
        print(f"N={n}: sup_k E|w_k|^{2 * cfg['monitor.p']} = {mon.sup_moment:.6g}, K_hat = {mon.bound_constant:.4g}, "
              f"beta0_hat = {mon.beta0_estimate:g}, flagged = {len(mon.flagged)}")
    write_table(rows, out / "monitor", fmt)
    for a, b, na, nb in zip(sups, sups[1:], counts, counts[1:]):
        ratio = a / b
        _check(0.5 <= ratio <= 2.0, f"sup-moment ratio N={na}/N={nb} = {ratio:.4f} in [0.5, 2]", failures)


HANDLERS = {
    "solve-det": cmd_solve_det,
    "solve-snse": cmd_solve_snse,
    "stokes-oracle": cmd_stokes_oracle,
    "convergence": cmd_convergence,
    "one-step-probe": cmd_one_step,
    "fk-estimate": cmd_fk_estimate,
    "mc-fourier": cmd_mc_fourier,
    "monitor": cmd_monitor,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vortexflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="config file or name of a packaged config")
        s.add_argument("--seed", type=int, help="overrides the config seed")
        s.add_argument("--out", help="output directory (default: output.dir)")
        s.add_argument("--format", choices=("csv", "json"), help="report format (default: output.format)")
        s.add_argument("--assert", dest="check", action="store_true", help="exit 4 if an acceptance check fails")
    sub.add_parser("list-configs", help="print the packaged config names")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-configs":
        print("\n".join(cfgmod.packaged_configs()))
        return EXIT_OK
    try:
        cfg = cfgmod.load(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = Path(args.out or cfg["output.dir"])
        out.mkdir(parents=True, exist_ok=True)
        fmt = args.format or cfg["output.format"]
    except (cfgmod.ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    failures: list[str] = []
    try:
        HANDLERS[args.command](cfg, out, fmt, failures)
    except (CFLError, EstimateRejected, DivergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, cfgmod.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.check and failures:
        print(f"{len(failures)} acceptance check(s) failed", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

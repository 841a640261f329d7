"""Command-line front end.

Subcommands: ``simulate``, ``converge-time``, ``converge-space``, ``ergodic``,
``verify``.  Each takes a flat key=value config file (``--config``) plus the
runtime flags ``--seed``, ``--out``, ``--threads``, ``--deterministic`` and
``--svg``.  Precedence: flags > SCHSIM_* environment variables > config file.
Deterministic mode pins threads to 1 and writes timing fields as NA, so output
files are byte-reproducible from their own embedded config echo.

Failures are reported as single machine-readable lines ``error: <kind>: ...``
on stderr; exit code 2 flags config/usage problems, 1 runtime failures.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import read_checkpoint, write_checkpoint
from .config import (COMMANDS, ConfigError, RunConfig, apply_env_overrides,
                     build_config, parse_pairs, serialize_config)
from .expressions import evaluate_expression
from .experiments import (ConvergenceTable, run_ergodic_study,
                          run_spatial_study, run_temporal_study)
from .grid import SpectralBasis
from .integrator import (DriftSpec, SchemeParams, TrajectoryBlowUpError,
                         initial_state, run_trajectory)
from .noise import NoiseSource
from .output import write_csv, write_svg_line_chart
from .verify import run_all_checks

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schsim",
        description="Tamed exponential Euler solver and experiment harness for "
                    "the stochastic Cahn-Hilliard equation on (0, pi).")
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "simulate": "integrate one trajectory, with optional snapshots and checkpoints",
        "converge-time": "temporal refinement study against a fine-step reference",
        "converge-space": "spatial refinement study against a fine-grid reference",
        "ergodic": "long-run averages of the bounded test function",
        "verify": "run the built-in invariant suite",
    }
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=descriptions[name])
        cmd.add_argument("--config", help="key=value configuration file")
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument("--out", default=".", help="output directory (default: .)")
        cmd.add_argument("--threads", type=int, default=1,
                         help="trajectory-chunk parallelism (default: 1)")
        cmd.add_argument("--deterministic", action="store_true",
                         help="single-threaded fixed reduction order, NA timings")
        cmd.add_argument("--svg", action="store_true", help="also emit SVG charts")
    return parser


def _load_config(args) -> RunConfig:
    text = ""
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
    pairs = parse_pairs(text)
    pairs = apply_env_overrides(pairs, os.environ)
    if args.seed is not None:
        pairs["seed"] = str(args.seed)
    if args.deterministic:
        pairs["deterministic"] = "true"
    if "command" in pairs and pairs["command"] != args.command:
        raise ConfigError([
            f"config says command = {pairs['command']!r} but the "
            f"{args.command!r} subcommand was invoked"])
    pairs["command"] = args.command
    return build_config(pairs)


def _scheme_pieces(cfg: RunConfig):
    basis = SpectralBasis(cfg.n_modes)
    drift = DriftSpec(cfg.drift_a0, cfg.drift_a1, cfg.drift_a2, cfg.drift_a3,
                      validation_mode=cfg.validation_mode)
    return basis, drift


def _steps(t_final: float, tau: float) -> int:
    return math.floor(t_final / tau + 1e-9)


def _maybe_na(cfg: RunConfig, seconds: float) -> str:
    return "NA" if cfg.deterministic else format(seconds, ".3f")


def _cmd_simulate(cfg: RunConfig, out_dir: Path, want_svg: bool) -> int:
    if cfg.checkpoint_in:
        params, source, state = read_checkpoint(cfg.checkpoint_in).rebuild()
        basis = params.basis
    else:
        basis, drift = _scheme_pieces(cfg)
        params = SchemeParams(basis, drift, cfg.tau, cfg.sigma)
        tau_fine = cfg.tau_fine if cfg.tau_fine is not None else cfg.tau
        source = NoiseSource(cfg.seed, cfg.trajectory_id,
                             tau_fine=tau_fine, n_modes_max=cfg.n_modes - 1)
        state = initial_state(params, evaluate_expression(cfg.initial, basis.grid))
    n_total = _steps(cfg.t_final, params.tau)
    if n_total < state.step_index:
        raise ConfigError([f"t_final corresponds to step {n_total}, but the "
                           f"checkpoint is already at step {state.step_index}"])
    snapshots: list[tuple[int, np.ndarray]] = []

    def observer(m, s):
        take = (cfg.snapshot_every > 0 and m % cfg.snapshot_every == 0)
        if take or m == n_total:
            snapshots.append((m, basis.from_spectral(s.coeffs)))

    final = run_trajectory(params, state, source, n_total - state.step_index,
                           observers=(observer,))
    if cfg.checkpoint_out:
        write_checkpoint(cfg.checkpoint_out, params, final, source)

    echo = serialize_config(cfg)
    rows = [(m * params.tau, x, value)
            for m, u in snapshots for x, value in zip(basis.grid, u)]
    write_csv(out_dir / "trajectory.csv", ("t", "x", "value"), rows, echo,
              {"final_step": final.step_index})
    u_final = basis.from_spectral(final.coeffs)
    print(f"simulate: {final.step_index} steps, mean {float(np.mean(u_final))!r}, "
          f"l2 norm {float(basis.norm(u_final, 'l2'))!r}")
    if want_svg:
        series = [(f"t={m * params.tau:g}", basis.grid, u) for m, u in snapshots]
        write_svg_line_chart(out_dir / "trajectory.svg", series,
                             "trajectory snapshots", "x", "u(x)")
    return 0


def _convergence_outputs(cfg: RunConfig, table: ConvergenceTable, out_dir: Path,
                         want_svg: bool, stem: str, param_label: str) -> None:
    echo = serialize_config(cfg)
    rows = [(row.tau, row.n_modes, row.error,
             None if row.pair_rate is None else row.pair_rate)
            for row in table.rows]
    extra = {"slope": table.slope,
             "wallclock_s": _maybe_na(cfg, table.wallclock_s)}
    write_csv(out_dir / f"{stem}.csv", ("tau", "n_modes", "error", "pair_rate"),
              rows, echo, extra)
    print(f"{table.kind} refinement: slope {table.slope:.3f}")
    for row in table.rows:
        rate = "" if row.pair_rate is None else f", pair rate {row.pair_rate:.3f}"
        print(f"  tau={row.tau!r} n_modes={row.n_modes}: error {row.error:.6e}{rate}")
    if want_svg:
        if table.kind == "time":
            xs = [row.tau for row in table.rows]
        else:
            xs = [np.pi / row.n_modes for row in table.rows]
        write_svg_line_chart(out_dir / f"{stem}.svg",
                             [("error", xs, [row.error for row in table.rows])],
                             f"{table.kind} refinement (slope {table.slope:.3f})",
                             param_label, "mean-square error", logx=True, logy=True)


def _cmd_converge_time(cfg: RunConfig, out_dir: Path, want_svg: bool, threads: int) -> int:
    basis, drift = _scheme_pieces(cfg)
    table = run_temporal_study(
        basis=basis, drift=drift, sigma=cfg.sigma, t_final=cfg.t_final,
        tau_ref=cfg.tau_ref, tau_ladder=cfg.tau_ladder, initial=cfg.initial,
        seed=cfg.seed, n_trajectories=cfg.n_trajectories, threads=threads)
    _convergence_outputs(cfg, table, out_dir, want_svg, "convergence_time", "tau")
    return 0


def _cmd_converge_space(cfg: RunConfig, out_dir: Path, want_svg: bool, threads: int) -> int:
    _, drift = _scheme_pieces(cfg)
    table = run_spatial_study(
        drift=drift, sigma=cfg.sigma, t_final=cfg.t_final, tau=cfg.tau,
        n_modes_ladder=cfg.n_modes_ladder, n_modes_ref=cfg.n_modes_ref,
        initial=cfg.initial, seed=cfg.seed,
        n_trajectories=cfg.n_trajectories, threads=threads)
    _convergence_outputs(cfg, table, out_dir, want_svg, "convergence_space", "h")
    return 0


def _cmd_ergodic(cfg: RunConfig, out_dir: Path, want_svg: bool) -> int:
    basis, drift = _scheme_pieces(cfg)
    result = run_ergodic_study(
        basis=basis, drift=drift, sigma=cfg.sigma, tau=cfg.tau,
        t_final=cfg.t_final, initials=cfg.initials, v_expr=cfg.test_v,
        alpha1=cfg.test_alpha1, alpha2=cfg.test_alpha2, estimator=cfg.estimator,
        n_trajectories=cfg.n_trajectories, t_final_ensemble=cfg.t_final_ensemble,
        seed=cfg.seed, burn_in=cfg.burn_in, thinning=cfg.thinning)
    echo = serialize_config(cfg)
    summary_rows = []
    for run in result.runs:
        stem = run.label.replace("[", "_").replace("]", "")
        write_csv(out_dir / f"ergodic_{stem}.csv", ("t", "running_average"),
                  run.history, echo, {"estimator": run.estimator,
                                      "initial": run.initial,
                                      "estimate": run.estimate})
        summary_rows.append((run.label, run.estimator, run.initial, run.estimate,
                             abs(run.estimate), run.n_samples,
                             _maybe_na(cfg, run.wallclock_s)))
        print(f"{run.label}: initial {run.initial!r} -> estimate {run.estimate:+.6f} "
              f"({run.n_samples} samples)")
    write_csv(out_dir / "ergodic_summary.csv",
              ("label", "estimator", "initial", "estimate", "abs_error_vs_zero",
               "n_samples", "wallclock_s"),
              summary_rows, echo)
    if want_svg:
        series = [(run.label, [t for t, _ in run.history],
                   [a for _, a in run.history]) for run in result.runs]
        write_svg_line_chart(out_dir / "ergodic.svg", series,
                             "running averages", "t", "time average")
    return 0


def _cmd_verify() -> int:
    results = run_all_checks()
    for res in results:
        status = "pass" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
    failed = [res for res in results if not res.passed]
    print(f"verify: {len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        threads = 1 if cfg.deterministic else max(1, args.threads)
        if args.command == "simulate":
            return _cmd_simulate(cfg, out_dir, args.svg)
        if args.command == "converge-time":
            return _cmd_converge_time(cfg, out_dir, args.svg, threads)
        if args.command == "converge-space":
            return _cmd_converge_space(cfg, out_dir, args.svg, threads)
        if args.command == "ergodic":
            return _cmd_ergodic(cfg, out_dir, args.svg)
        return _cmd_verify()
    except ConfigError as exc:
        for message in exc.messages:
            print(f"error: config: {message}", file=sys.stderr)
        return 2
    except TrajectoryBlowUpError as exc:
        print(f"error: blow-up: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

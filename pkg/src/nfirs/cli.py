"""Command-line entry point (``nfirs``).

Exit codes: 0 success, 1 a reported check failed, 2 configuration error,
3 infeasible problem, 4 non-convergence warning.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .channel import Variant, bs_irs_channel, user_links
from .config import OVERRIDE_KEYS, ConfigError, ScenarioConfig, from_dict, load_config
from .figures import FIGURES
from .geometry import (
    bs_positions,
    direction_cosines,
    fraunhofer_distance,
    irs_positions,
    phase_increment,
    solve_deployment,
    validate_criterion,
    write_positions_csv,
)
from .harness import (
    interference_free_rate,
    mc_ergodic_rate,
    run_experiment,
    save_result,
    version_string,
)
from .io import write_complex_binary, write_complex_csv, write_json, write_series_csv
from .metrics import expected_edof, g_jk_exact, g_jk_prop2, g_jk_theorem1
from .moments import build_moment_set, statistics
from .optimizer import InfeasibleProblem, run_algorithm1

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NONCONVERGED = 0, 1, 2, 3, 4

COMMANDS = {
    "validate-deployment": "report the deployment-criterion predicates for the configured geometry",
    "solve-deployment": "place the IRS on the configured ray so that |Delta| = q*pi/M",
    "channel-dump": "write F (csv or binary) and the element positions",
    "metrics": "g_jk (exact, closed form) and E[EDoF] for the configured geometry",
    "optimize": "run the phase/power optimizer and evaluate it by Monte Carlo",
    "run": "run the experiment named in [run] experiment",
    "reproduce": "run a pre-baked figure scenario and print its checks",
}


def _epilog() -> str:
    lines = ["commands:"]
    lines += [f"  {name:<20} {text}" for name, text in COMMANDS.items()]
    lines += ["", "override keys (--set section.key=value):"]
    lines += [f"  {key}" for key in OVERRIDE_KEYS]
    lines += ["", "figures: " + ", ".join(FIGURES)]
    lines += ["", "exit codes: 0 ok, 1 check failed, 2 config error, 3 infeasible, 4 not converged"]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario TOML file (defaults if omitted)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key, e.g. geometry.zeta_irs=6",
    )
    common.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="nfirs",
        description="Near-field sparse-array IRS analysis and sum-rate optimisation.",
        epilog=_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, text in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name in ("validate-deployment", "solve-deployment"):
            p.add_argument("--q", type=int, default=2, help="kernel-null index (even)")
        if name == "channel-dump":
            p.add_argument("--variant", choices=[v.value for v in Variant], default="exact")
            p.add_argument("--format", choices=["csv", "bin"], default="csv")
        if name == "reproduce":
            p.add_argument("figure", choices=sorted(FIGURES))
    return parser


def _overrides(args) -> list[str]:
    items = list(args.overrides)
    if args.seed is not None:
        items.append(f"run.seed={args.seed}")
    return items


def _load(args) -> ScenarioConfig:
    if args.config is None:
        return from_dict({}, _overrides(args))
    return load_config(args.config, _overrides(args))


def _stamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def cmd_validate(args, config) -> int:
    report = validate_criterion(config.geometry, args.q)
    for name in ("delta", "q", "q_nearest", "q_error", "symmetric", "q_even",
                 "q_not_multiple", "q_coprime", "aperture_ok", "satisfied"):
        print(f"{name:15} {getattr(report, name)}")
    return EXIT_OK if report.satisfied else EXIT_CHECK_FAILED


def cmd_solve(args, config) -> int:
    g = config.geometry
    center = solve_deployment(
        args.q, g.M, g.zeta_bs, g.zeta_irs, direction_cosines(g), g.wavelength
    )
    placed = g.with_center(center)
    print("irs_center_m   " + ", ".join(f"{c:.6f}" for c in center))
    print(f"distance_m     {placed.distance:.6f}")
    print(f"delta_rad      {phase_increment(placed):.12g}")
    print(f"fraunhofer_m   {fraunhofer_distance(placed):.6f}")
    return EXIT_OK


def cmd_channel_dump(args, config) -> int:
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    chan = bs_irs_channel(config.geometry, args.variant)
    stem = f"F_{args.variant}"
    if args.format == "csv":
        write_complex_csv(out / f"{stem}.csv", chan.F)
    else:
        write_complex_binary(out / f"{stem}.bin", chan.F)
    write_positions_csv(out / "bs_positions.csv", bs_positions(config.geometry))
    write_positions_csv(out / "irs_positions.csv", irs_positions(config.geometry))
    print(f"wrote {stem}.{args.format} with shape {chan.F.shape[0]}x{chan.F.shape[1]} to {out}")
    return EXIT_OK


def cmd_metrics(args, config) -> int:
    g = config.geometry
    F = bs_irs_channel(g, Variant.EXACT).F
    ones = np.ones(g.N, dtype=complex)
    edof = expected_edof(F, user_links(g), config.phase_samples, config.seed)
    payload = {
        "g_jk_exact": g_jk_exact(F, ones, ones).g_jk,
        "g_jk_theorem1": g_jk_theorem1(g).g_jk,
        "g_jk_null_placement": g_jk_prop2(g.N_u, g.N_v),
        "edof_mean": edof.mean,
        "edof_stderr": edof.stderr,
        "phase_samples": config.phase_samples,
    }
    for key, value in payload.items():
        print(f"{key:20} {value:.6g}")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_json(args.out_dir / "metrics.json", payload)
    return EXIT_OK


def cmd_optimize(args, config) -> int:
    g = config.geometry
    F = bs_irs_channel(g, Variant.EXACT).F
    links = user_links(g, kappas=config.kappas)
    ms = build_moment_set(F, links)
    sigmas = np.array(config.noise_watts)
    state = run_algorithm1(
        ms, sigmas, config.p_max_watts, epsilon=config.epsilon,
        max_outer=config.max_outer, seed=config.seed,
    )
    approx = statistics(ms, state.phases, state.p, sigmas).sum_rate
    mc = mc_ergodic_rate(F, links, state.phases, state.p, sigmas, config.mc_samples, config.seed)
    free = interference_free_rate(F, links, state.phases, state.p, sigmas, config.mc_samples, config.seed)

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    n = len(state.objective_trace)
    write_series_csv(
        out / "convergence.csv",
        ["outer_iter", "objective", "power_used", "admm_residual_max"],
        [range(n), state.objective_trace, state.power_trace, state.residual_trace],
    )
    write_json(out / "optimize_state.json", {
        "power_w": state.p,
        "phase_rad": np.angle(state.phases),
        "approx_sum_rate": approx,
        "mc_ergodic_rate": mc.mean,
        "mc_stderr": mc.stderr,
        "interference_free_rate": free.mean,
        "initial_approx_sum_rate": state.objective_trace[0],
        "outer_iterations": n - 1,
        "converged": state.converged,
        "warning": state.warning,
    })
    write_json(out / "optimize_manifest.json", {
        "config": config.raw,
        "defaults_filled": list(config.defaults_used),
        "seed": config.seed,
        "version": version_string(),
        "timestamp": _stamp(),
    })
    print(f"initial approx sum-rate  {state.objective_trace[0]:.4f} bits/s/Hz")
    print(f"final   approx sum-rate  {approx:.4f} bits/s/Hz")
    print(f"final   Monte Carlo      {mc.mean:.4f} +/- {mc.stderr:.4f} bits/s/Hz")
    print(f"interference-free (MC)   {free.mean:.4f} +/- {free.stderr:.4f} bits/s/Hz")
    print(f"outer iterations {n - 1}, converged={state.converged}")
    if not state.converged:
        print(f"warning: {state.warning}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_run(args, config) -> int:
    result = run_experiment(config)
    csv_path, json_path = save_result(result, args.out_dir)
    print(f"wrote {csv_path} and {json_path.name}")
    for w in result.metadata["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_NONCONVERGED if result.metadata["warnings"] else EXIT_OK


def cmd_reproduce(args, _config) -> int:
    figure = FIGURES[args.figure]
    print(f"{args.figure}: {figure.description}")
    configs = figure.configs(_overrides(args))
    results, warnings = [], []
    for (label, _), config in zip(figure.runs, configs):
        result = run_experiment(config)
        result.metadata["figure"] = args.figure
        result.metadata["run_label"] = label
        out = args.out_dir / args.figure / label
        csv_path, _ = save_result(result, out)
        print(f"  [{label}] wrote {csv_path}")
        results.append(result)
        warnings += result.metadata["warnings"]
    checks = figure.checks(results, configs)
    for label, passed, detail in checks:
        print(f"  {'PASS' if passed else 'FAIL'}  {label}" + (f"  ({detail})" if detail else ""))
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not all(passed for _, passed, _ in checks):
        return EXIT_CHECK_FAILED
    return EXIT_NONCONVERGED if warnings else EXIT_OK


HANDLERS = {
    "validate-deployment": cmd_validate,
    "solve-deployment": cmd_solve,
    "channel-dump": cmd_channel_dump,
    "metrics": cmd_metrics,
    "optimize": cmd_optimize,
    "run": cmd_run,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = None if args.command == "reproduce" else _load(args)
        return HANDLERS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleProblem as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        # geometry / deployment preconditions
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""
Command-line entry point for lame-spectral.

This module provides the argparse CLI: one subcommand per experiment plus the
classify, calibrate and snapshot utilities. Exit codes are 0 on a passing
verdict, 1 on a failing verdict and 2 on usage, configuration or precondition
errors.
"""

import argparse
import math
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
import structlog
from pydantic import ValidationError

from .config import config, configure_logging
from .errors import LameSpectralError, PreconditionError
from .experiments import ExperimentConfig, ExperimentKind, initial_data, run_experiment
from .grid import read_snapshot, write_snapshot
from .models import Space
from .norms import check_inhomogeneous, classify_pair, exponent_tuple, lr_norm
from .persistence import render_summary, resolve_inside, write_report
from .plotting import PlotStyle, emit_plot_script

logger = structlog.get_logger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

_COMMANDS: dict[str, ExperimentKind] = {
    "diag-check": ExperimentKind.DIAG_CHECK,
    "propagate": ExperimentKind.PROPAGATE,
    "decay-fit": ExperimentKind.DECAY_FIT,
    "strichartz": ExperimentKind.STRICHARTZ,
    "inhomo": ExperimentKind.INHOMO,
    "perturbed": ExperimentKind.PERTURBED,
    "resolvent-sweep": ExperimentKind.RESOLVENT_SWEEP,
}


def exponent(text: str) -> float:
    """Lebesgue exponent from the command line; 'inf' is accepted."""
    try:
        value = float(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not an exponent: {text}") from e
    if not value >= 1:
        raise argparse.ArgumentTypeError(f"exponent {text} outside [1, inf]")
    return value


def _add_grid_flags(parser: argparse.ArgumentParser, N: int = 64) -> None:
    parser.add_argument("--config", type=Path, help="Experiment config (JSON)")
    parser.add_argument("--n", type=int, default=2, help="Spatial dimension (default: %(default)s)")
    parser.add_argument("--N", type=int, default=N, help="Points per axis (default: %(default)s)")
    parser.add_argument(
        "--L", type=float, default=2 * math.pi, help="Box side length (default: 2 pi)"
    )
    parser.add_argument("--lambda", dest="lam", type=float, default=1.0, help="First Lamé constant")
    parser.add_argument("--mu", type=float, default=1.0, help="Shear modulus")
    parser.add_argument("--seed", type=int, default=0, help="Root seed (default: %(default)s)")
    parser.add_argument("--trials", type=int, default=None, help="Random trials")
    parser.add_argument(
        "--plot",
        choices=[style.value for style in PlotStyle],
        default=None,
        help="Also emit a gnuplot script in this style",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lame-spectral",
        description="lame-spectral - pseudospectral elastic waves and estimate verification",
    )
    parser.add_argument(
        "--jobs",
        type=int,
        default=config.jobs,
        help="Maximum concurrent trials (default: %(default)s)",
    )
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default=config.log_level.upper(),
        help="Logging level (default: %(default)s)",
    )
    parser.add_argument(
        "--output-dir",
        type=Path,
        default=config.output_dir,
        help="Directory for reports (default: %(default)s)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    diag = commands.add_parser("diag-check", help="Diagonalization residuals and norm equivalences")
    _add_grid_flags(diag)

    propagate = commands.add_parser("propagate", help="Unitarity, energy and the oracle triangle")
    _add_grid_flags(propagate, N=16)
    propagate.add_argument("--times", type=float, nargs="+", help="Sample times")

    decay = commands.add_parser("decay-fit", help="Dispersive decay slope fit")
    _add_grid_flags(decay, N=512)
    decay.add_argument("--j", type=int, default=1, help="Frequency shell (default: %(default)s)")
    decay.add_argument("--t-window", type=float, nargs=2, metavar=("START", "STOP"))

    strichartz = commands.add_parser("strichartz", help="Strichartz quotient stability")
    _add_grid_flags(strichartz)
    strichartz.add_argument("--q", type=exponent, default=math.inf)
    strichartz.add_argument("--r", type=exponent, default=2.0)
    strichartz.add_argument("--shells", type=int, nargs="+", default=[1, 2, 3])
    strichartz.add_argument("--no-velocity", action="store_true", help="Use g = 0")
    strichartz.add_argument("--ceiling", type=float, help="Quotient ceiling (default: calibrated)")

    inhomo = commands.add_parser("inhomo", help="Inhomogeneous Strichartz quotients")
    _add_grid_flags(inhomo)
    for name in ("q", "r", "q-dual", "r-dual"):
        inhomo.add_argument(f"--{name}", type=exponent, required=False, default=None)
    inhomo.add_argument("--shells", type=int, nargs="+", default=[1, 2, 3])
    inhomo.add_argument("--ceiling", type=float, help="Quotient ceiling (default: calibrated)")

    perturbed = commands.add_parser("perturbed", help="Weighted estimates and the Picard solve")
    _add_grid_flags(perturbed, N=32)
    perturbed.add_argument("--coupling", type=float, default=0.1)
    perturbed.add_argument("--p", type=float, default=1.25, help="Fefferman-Phong exponent")

    sweep = commands.add_parser("resolvent-sweep", help="Uniform Sobolev quotient sweep")
    sweep.add_argument("--config", type=Path, required=True, help="Experiment config (JSON)")
    sweep.add_argument("--plot", choices=[style.value for style in PlotStyle], default=None)

    calibrate = commands.add_parser(
        "calibrate", help="Store the calibrated quotient ceiling in a config"
    )
    calibrate.add_argument("--config", type=Path, required=True, help="Experiment config (JSON)")
    calibrate.add_argument("--output", type=str, help="File name inside the output directory")

    classify = commands.add_parser("classify", help="Classify an exponent pair")
    classify.add_argument("--n", type=int, required=True)
    classify.add_argument("--q", type=exponent, required=True)
    classify.add_argument("--r", type=exponent, required=True)
    classify.add_argument("--q-dual", type=exponent, help="Check the inhomogeneous conditions too")
    classify.add_argument("--r-dual", type=exponent)

    snapshot = commands.add_parser("snapshot", help="Inspect, convert or generate field snapshots")
    source = snapshot.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", type=Path, help="Snapshot to inspect")
    source.add_argument("--config", type=Path, help="Write the seeded initial data of a config")
    snapshot.add_argument("--to", choices=[space.value for space in Space])
    snapshot.add_argument("--output", type=str, help="File name inside the output directory")
    return parser


def _config_from_flags(kind: ExperimentKind, args: argparse.Namespace) -> ExperimentConfig:
    data: dict[str, Any] = {
        "kind": kind.value,
        "grid": {"n": args.n, "N": args.N, "L": args.L},
        "lame": {"lambda": args.lam, "mu": args.mu},
        "seed": args.seed,
    }
    if args.trials is not None:
        data["trials"] = args.trials
    match kind:
        case ExperimentKind.PROPAGATE if args.times:
            data["propagate"] = {"times": args.times}
        case ExperimentKind.DECAY_FIT:
            data["decay"] = {"j": args.j, "t_window": args.t_window}
        case ExperimentKind.STRICHARTZ:
            data["strichartz"] = {
                "q": args.q,
                "r": args.r,
                "shells": args.shells,
                "velocity_data": not args.no_velocity,
                "ceiling": args.ceiling,
            }
        case ExperimentKind.INHOMO:
            missing = [name for name in ("q", "r", "q_dual", "r_dual") if getattr(args, name) is None]
            if missing:
                raise PreconditionError(f"inhomo needs --config or all of {missing}")
            data["inhomogeneous"] = {
                "q": args.q,
                "r": args.r,
                "q_dual": args.q_dual,
                "r_dual": args.r_dual,
                "shells": args.shells,
                "ceiling": args.ceiling,
            }
        case ExperimentKind.PERTURBED:
            data["potential"] = {"coupling": args.coupling, "p": args.p}
    return ExperimentConfig.model_validate(data)


def _load_config(kind: ExperimentKind, args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "config", None) is not None:
        cfg = ExperimentConfig.from_file(args.config)
        if cfg.kind is not kind:
            raise PreconditionError(
                f"Config describes {cfg.kind.value}, not {kind.value}"
            )
        return cfg
    return _config_from_flags(kind, args)


def _run(kind: ExperimentKind, args: argparse.Namespace) -> int:
    cfg = _load_config(kind, args)
    report = run_experiment(cfg, jobs=args.jobs)
    write_report(report, args.output_dir)
    if args.plot is not None:
        emit_plot_script(report, args.output_dir, PlotStyle(args.plot))
    sys.stdout.write(render_summary(report))
    return EXIT_PASS if report.passed else EXIT_FAIL


def _classify(args: argparse.Namespace) -> int:
    if (args.q_dual is None) != (args.r_dual is None):
        raise PreconditionError("--q-dual and --r-dual must be given together")
    exponents = exponent_tuple(args.n, args.q, args.r, args.q_dual, args.r_dual)
    sys.stdout.write(classify_pair(exponents.q, exponents.r, exponents.n).value + "\n")
    if exponents.q_dual is None:
        return EXIT_PASS
    check = check_inhomogeneous(exponents)
    sys.stdout.write(("inhomogeneous: ok" if check.ok else "inhomogeneous: fails") + "\n")
    for reason in check.reasons:
        sys.stdout.write(f"  - {reason}\n")
    return EXIT_PASS if check.ok else EXIT_FAIL


def _calibrate(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_file(args.config).with_calibrated_ceiling()
    target = resolve_inside(args.output_dir, args.output or f"{cfg.kind.value}_calibrated.json")
    Path(args.output_dir).mkdir(parents=True, exist_ok=True)
    target.write_text(
        cfg.model_dump_json(by_alias=True, exclude_none=True, indent=2) + "\n", encoding="utf-8"
    )
    section = cfg.strichartz if cfg.kind is ExperimentKind.STRICHARTZ else cfg.inhomogeneous
    ceiling = None if section is None else section.ceiling
    sys.stdout.write(f"ceiling={ceiling!r}\nwrote {target}\n")
    return EXIT_PASS


def _snapshot(args: argparse.Namespace) -> int:
    if args.config is not None:
        cfg = ExperimentConfig.from_file(args.config)
        data = initial_data(cfg)
        stem = args.output or f"{cfg.kind.value}_initial"
        Path(args.output_dir).mkdir(parents=True, exist_ok=True)
        for label, field in (("f", data.f), ("g", data.g)):
            if not np.any(field.values):
                continue
            target = resolve_inside(args.output_dir, f"{stem}_{label}.lfd")
            write_snapshot(field, target)
            sys.stdout.write(f"{label}: {target}\n")
        return EXIT_PASS

    field = read_snapshot(args.input)
    grid = field.grid
    physical = field.to_physical()
    sys.stdout.write(
        f"n={grid.n} N={grid.N} L={grid.L!r} space={field.space.value}\n"
        f"L2={lr_norm(physical, 2.0)!r} Linf={lr_norm(physical, math.inf)!r}\n"
    )
    if args.to is not None:
        if args.output is None:
            raise PreconditionError("--to needs --output")
        converted = physical if args.to == Space.PHYSICAL.value else field.to_frequency()
        target = resolve_inside(args.output_dir, args.output)
        Path(args.output_dir).mkdir(parents=True, exist_ok=True)
        write_snapshot(converted, target)
        sys.stdout.write(f"wrote {target}\n")
    return EXIT_PASS


def cli_run(argv: Sequence[str] | None = None) -> int:
    """Parse argv, run the subcommand and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    configure_logging(args.log_level)
    config.log_level = args.log_level
    config.jobs = max(1, args.jobs)
    config.output_dir = args.output_dir

    try:
        if args.command == "classify":
            return _classify(args)
        if args.command == "snapshot":
            return _snapshot(args)
        if args.command == "calibrate":
            return _calibrate(args)
        return _run(_COMMANDS[args.command], args)
    except (ValidationError, PreconditionError, ValueError, OSError) as e:
        logger.error("Command failed", command=args.command, error=str(e), exc_info=True)
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    except LameSpectralError as e:
        logger.error("Command failed", command=args.command, error=str(e), exc_info=True)
        sys.stderr.write(f"error: {e}\n")
        return EXIT_FAIL


def cli() -> None:
    """Command-line interface entry point."""
    sys.exit(cli_run())


if __name__ == "__main__":
    cli()

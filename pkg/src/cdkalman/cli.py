"""Command-line interface.

Subcommands: ``simulate`` (dump one dataset), ``run`` (single experiment),
``sweep-delta`` (sampling-period sweep), ``sweep-illcond`` (conditioning
sweep).  Exit codes: 0 success, 1 configuration/usage error, 2 IO error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .exceptions import ConfigError
from .filters import FAMILIES, VARIANTS, FilterSpec
from .models import CT_INITIAL_COV, CT_INITIAL_MEAN, dataset_to_csv, simulate_dataset

DEFAULT_FILTERS = ("ekf-baseline:conventional",
                   "ekf-ukf:conventional", "ekf-ukf:sr-onesweep", "ekf-ukf:sr-joseph",
                   "ekf-5dckf:conventional", "ekf-5dckf:sr-onesweep",
                   "ekf-5dckf:sr-joseph")

PAPER_EXACT_EM_STEP = 5e-4


class _Parser(argparse.ArgumentParser):
    """Argparse with config-error semantics: one-line diagnostic, exit 1."""

    def error(self, message: str):  # noqa: D102 - argparse hook
        raise ConfigError(message)


def parse_filters(tokens: str) -> tuple[FilterSpec, ...]:
    specs = []
    for token in tokens.split(","):
        token = token.strip()
        if not token:
            continue
        family, _, variant = token.partition(":")
        variant = variant or "conventional"
        if family not in FAMILIES or variant not in VARIANTS:
            raise ConfigError(f"unknown filter token {token!r}")
        try:
            specs.append(FilterSpec(family=family, variant=variant))
        except ConfigError as exc:
            raise ConfigError(f"invalid filter token {token!r}: {exc}") from None
    if not specs:
        raise ConfigError("--filters selected no filters")
    return tuple(specs)


def parse_sweep_values(text: str, geometric: bool) -> tuple[float, ...]:
    """Comma list, or ``start:stop`` expanded by decades (geometric) or by
    unit steps (arithmetic)."""
    text = text.strip()
    if ":" in text:
        start_s, _, stop_s = text.partition(":")
        try:
            start, stop = float(start_s), float(stop_s)
        except ValueError:
            raise ConfigError(f"cannot parse sweep range {text!r}") from None
        values = []
        if geometric:
            if start <= 0 or stop <= 0 or stop > start:
                raise ConfigError("geometric range must decrease through positives")
            value = start
            while value >= stop * (1.0 - 1e-9):
                values.append(value)
                value /= 10.0
        else:
            if stop < start:
                raise ConfigError("arithmetic range must not decrease")
            value = start
            while value <= stop + 1e-9:
                values.append(value)
                value += 1.0
        return tuple(values)
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"cannot parse sweep values {text!r}") from None


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--experiment", default="gauss",
                        choices=["gauss", "glint", "illcond"],
                        help="measurement scenario")
    parser.add_argument("--delta", type=float, default=1.0,
                        help="sampling period in seconds")
    parser.add_argument("--deltas", default=None,
                        help="comma list or start:stop range of sweep values")
    parser.add_argument("--runs", type=int, default=100,
                        help="Monte Carlo runs")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tol", type=float, default=1e-4,
                        help="integration tolerance (absolute and relative)")
    parser.add_argument("--em-step", type=float, default=1e-3,
                        help="Euler-Maruyama truth step in seconds")
    parser.add_argument("--paper-exact", action="store_true",
                        help=f"use the finer {PAPER_EXACT_EM_STEP} s truth step")
    parser.add_argument("--filters", default=",".join(DEFAULT_FILTERS),
                        help="comma-separated family:variant tokens")
    parser.add_argument("--out-dir", default="results",
                        help="output directory")
    parser.add_argument("--horizon", type=float, default=150.0,
                        help="experiment horizon in seconds")


def build_parser() -> _Parser:
    parser = _Parser(prog="cdkalman",
                     description="Continuous-discrete Kalman filter benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("simulate", "simulate one dataset and dump it as CSV + manifest"),
            ("run", "run one experiment and write the results table"),
            ("sweep-delta", "sweep the sampling period"),
            ("sweep-illcond", "sweep the ill-conditioning parameter")):
        _add_common(sub.add_parser(name, help=help_text))
    return parser


def _em_step(args) -> float:
    return PAPER_EXACT_EM_STEP if args.paper_exact else args.em_step


def _ill_deltas(args, required: bool) -> tuple[float, ...] | None:
    if args.experiment != "illcond":
        return None
    if args.deltas is None:
        if required:
            raise ConfigError("--deltas is required for the illcond experiment")
        return (1e-3,)
    return parse_sweep_values(args.deltas, geometric=True)


def _cmd_simulate(args) -> int:
    ill = _ill_deltas(args, required=False)
    process, meas = bench.build_models(
        args.experiment if args.experiment != "illcond" else "illcond",
        ill[0] if ill else None)
    steps = int(args.horizon // args.delta)
    if steps < 1:
        raise ConfigError("horizon shorter than one sampling period")
    noise = {"kind": meas.name}
    dataset = simulate_dataset(process, meas, CT_INITIAL_MEAN, CT_INITIAL_COV,
                               args.delta, steps, _em_step(args), args.seed,
                               noise=noise)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "dataset.csv"
    dataset_to_csv(dataset, csv_path)
    print(f"wrote {csv_path} and {csv_path.with_suffix('.json')}")
    return 0


def _config_from_args(args, deltas: tuple[float, ...],
                      ill_deltas: tuple[float, ...] | None,
                      experiment: str) -> bench.ExperimentConfig:
    return bench.ExperimentConfig(
        experiment=experiment, deltas=deltas, ill_deltas=ill_deltas,
        runs=args.runs, horizon_s=args.horizon, seed=args.seed, tol=args.tol,
        em_step_s=_em_step(args), filters=parse_filters(args.filters))


def _cmd_run(args) -> int:
    ill = _ill_deltas(args, required=True)
    cfg = _config_from_args(args, (args.delta,), ill, args.experiment)
    result = bench.monte_carlo(cfg)
    paths = bench.write_outputs(result.rows, args.out_dir, cfg)
    _print_rows(result.rows)
    print(f"wrote {paths['csv']}")
    return 0


def _cmd_sweep_delta(args) -> int:
    if args.experiment == "illcond":
        raise ConfigError("sweep-delta applies to the gauss/glint experiments")
    deltas = parse_sweep_values(args.deltas or "1:12", geometric=False)
    cfg = _config_from_args(args, deltas, None, args.experiment)
    result = bench.sweep_delta(cfg)
    paths = bench.write_outputs(result.rows, args.out_dir, cfg, sweep=result,
                                sweep_variable="delta_s")
    _print_rows(result.rows)
    print(f"wrote {paths['csv']} and {paths['svg']}")
    return 0


def _cmd_sweep_illcond(args) -> int:
    ill = parse_sweep_values(args.deltas or "1e-1:1e-14", geometric=True)
    cfg = _config_from_args(args, (args.delta,), ill, "illcond")
    result = bench.sweep_illcond(cfg)
    paths = bench.write_outputs(result.rows, args.out_dir, cfg, sweep=result,
                                sweep_variable="delta_ill")
    _print_rows(result.rows)
    for label, value in sorted(result.breakdown.items()):
        where = "never" if value is None else f"{value:g}"
        print(f"breakdown {label}: {where}")
    for label in result.monotonicity_violations:
        print(f"warning: non-monotone failure pattern for {label}")
    print(f"wrote {paths['csv']} and {paths['svg']}")
    return 0


def _print_rows(rows) -> None:
    for row in rows:
        point = f"delta={row.delta_s:g}"
        if row.delta_ill is not None:
            point += f" deltaIll={row.delta_ill:g}"
        status = "FAILED" if row.failed else "ok"
        print(f"{row.label:28s} {point:24s} ARMSE_p={row.armse_p:10.4f} m "
              f"ARMSE_v={row.armse_v:10.4f} m/s  {status}  cpu={row.cpu_s:.3f}s")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "simulate": _cmd_simulate,
            "run": _cmd_run,
            "sweep-delta": _cmd_sweep_delta,
            "sweep-illcond": _cmd_sweep_illcond,
        }[args.command]
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

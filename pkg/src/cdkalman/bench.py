"""Monte Carlo experiment harness.

Experiments re-run the coordinated-turn tracker over many simulated
datasets and aggregate accumulated RMS errors:

    ARMSE_p = sqrt( (1 / (M K)) sum_runs sum_k |pos error|^2 )

and the velocity analogue.  A run fails when any filter step breaks down
numerically or its ARMSE_p exceeds 500 m; one failed run marks the whole
(filter, configuration) cell failed.  Every filter inside one run consumes
the byte-identical dataset (checked via digests), and run r draws its data
with seed ``seed + r``, so tables are reproducible bit-for-bit.

Monte Carlo runs execute in parallel worker processes; cap the pool with
the ``CDKALMAN_MAX_WORKERS`` environment variable (positive integer).
Aggregation is ordered by run index, independent of completion order.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, LengthMismatch
from .filters import FilterSpec, FilterTrace, run_filter
from .measurement_update import MeasurementModel
from .models import (
    CT_INITIAL_COV,
    CT_INITIAL_MEAN,
    SimulatedDataset,
    attach_measurements,
    coordinated_turn_model,
    illcond_model,
    radar_model,
    simulate_dataset,
    simulate_truth,
)
from .ode import Tolerances
from .time_update import ProcessModel

__all__ = [
    "ARMSE_FAILURE_M",
    "WORKERS_ENV_VAR",
    "GLINT_PROBABILITY",
    "GLINT_SCALE",
    "POSITION_INDICES",
    "VELOCITY_INDICES",
    "ExperimentConfig",
    "ResultRow",
    "SweepResult",
    "build_models",
    "compute_armse",
    "monte_carlo",
    "sweep_delta",
    "sweep_illcond",
    "write_outputs",
    "read_results_csv",
]

ARMSE_FAILURE_M = 500.0
WORKERS_ENV_VAR = "CDKALMAN_MAX_WORKERS"
GLINT_PROBABILITY = 0.25
GLINT_SCALE = 100.0
POSITION_INDICES = (0, 2, 4)
VELOCITY_INDICES = (1, 3, 5)

EXPERIMENTS = ("gauss", "glint", "illcond", "delta-sweep")

RESULT_CSV_HEADER = ["experiment", "filter", "variant", "delta_s", "deltaIll",
                     "runs", "seed", "tol", "armse_p_m", "armse_v_mps",
                     "failed", "cpu_s"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; validated on construction."""

    experiment: str
    deltas: tuple[float, ...] = (1.0,)
    ill_deltas: tuple[float, ...] | None = None
    runs: int = 100
    horizon_s: float = 150.0
    seed: int = 0
    tol: float = 1e-4
    em_step_s: float = 1e-3
    filters: tuple[FilterSpec, ...] = ()

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if not self.deltas or any(d <= 0.0 for d in self.deltas):
            raise ConfigError("sampling periods must be positive")
        if self.experiment == "illcond":
            ill = self.ill_deltas
            if not ill or any(d <= 0.0 for d in ill):
                raise ConfigError("ill-conditioning deltas must be positive")
            if any(b >= a for a, b in zip(ill, ill[1:])):
                raise ConfigError("ill-conditioning deltas must be decreasing")
        if not self.filters:
            raise ConfigError("at least one filter spec is required")
        for delta in self.deltas:
            if self.step_count(delta) < 1:
                raise ConfigError(
                    f"horizon {self.horizon_s} too short for delta {delta}")
        if not (0.0 < self.em_step_s <= min(self.deltas)):
            raise ConfigError("em_step_s must lie in (0, min(delta)]")
        if self.tol <= 0.0:
            raise ConfigError("tol must be positive")

    def step_count(self, delta: float) -> int:
        # Deltas that do not divide the horizon truncate it to K full periods.
        return int(np.floor(self.horizon_s / delta + 1e-9))

    def tolerances(self) -> Tolerances:
        return Tolerances(abs_tol=self.tol, rel_tol=self.tol)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "deltas": list(self.deltas),
            "ill_deltas": None if self.ill_deltas is None else list(self.ill_deltas),
            "runs": self.runs,
            "horizon_s": self.horizon_s,
            "seed": self.seed,
            "tol": self.tol,
            "em_step_s": self.em_step_s,
            "filters": [spec.label for spec in self.filters],
            "ukf_params": {
                "alpha": self.filters[0].ukf_params.alpha,
                "beta": self.filters[0].ukf_params.beta,
                "kappa": self.filters[0].ukf_params.kappa,
            },
        }


@dataclass
class ResultRow:
    """Aggregate metrics for one (filter, configuration point) cell."""

    experiment: str
    family: str
    variant: str
    delta_s: float
    delta_ill: float | None
    runs: int
    seed: int
    tol: float
    armse_p: float
    armse_v: float
    failed: bool
    cpu_s: float

    @property
    def label(self) -> str:
        return f"{self.family}:{self.variant}"


@dataclass
class SweepResult:
    rows: list[ResultRow]
    # Largest sweep value at which each filter fails; None = never failed.
    breakdown: dict[str, float | None] = field(default_factory=dict)
    # Labels whose failure pattern is not monotone along the sweep.
    monotonicity_violations: list[str] = field(default_factory=list)
    digests: dict = field(default_factory=dict)


def build_models(experiment: str,
                 ill_delta: float | None = None
                 ) -> tuple[ProcessModel, MeasurementModel]:
    """Process/measurement pair for a named experiment."""
    process = coordinated_turn_model()
    if experiment in ("gauss", "delta-sweep"):
        return process, radar_model()
    if experiment == "glint":
        return process, radar_model(glint_prob=GLINT_PROBABILITY,
                                    glint_scale=GLINT_SCALE)
    if experiment == "illcond":
        if ill_delta is None:
            raise ConfigError("illcond experiment needs an ill-conditioning delta")
        return process, illcond_model(ill_delta)
    raise ConfigError(f"unknown experiment {experiment!r}")


def _squared_errors(trace_means: np.ndarray, truth: np.ndarray,
                    indices: tuple[int, ...]) -> float:
    err = trace_means[:, indices] - truth[:, indices]
    return float(np.sum(err * err))


def compute_armse(traces: list[FilterTrace | np.ndarray],
                  truths: list[np.ndarray],
                  pos_indices: tuple[int, ...] = POSITION_INDICES,
                  vel_indices: tuple[int, ...] = VELOCITY_INDICES
                  ) -> tuple[float, float]:
    """Pooled position/velocity ARMSE over aligned traces and truths.

    A failed trace poisons the pool: both values come back infinite.
    """
    if len(traces) != len(truths):
        raise LengthMismatch(f"{len(traces)} traces vs {len(truths)} truths")
    if not traces:
        raise LengthMismatch("need at least one run")
    total_p = total_v = 0.0
    count = 0
    for trace, truth in zip(traces, truths):
        means = trace.means if isinstance(trace, FilterTrace) else np.asarray(trace)
        truth = np.asarray(truth)
        if means.shape != truth.shape:
            raise LengthMismatch(
                f"trace shape {means.shape} vs truth shape {truth.shape}")
        if isinstance(trace, FilterTrace) and trace.failed:
            return float("inf"), float("inf")
        total_p += _squared_errors(means, truth, pos_indices)
        total_v += _squared_errors(means, truth, vel_indices)
        count += truth.shape[0]
    return (float(np.sqrt(total_p / count)), float(np.sqrt(total_v / count)))


def _worker_count(runs: int) -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "")
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be a positive integer") from None
        if cap < 1:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be a positive integer")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, runs))


def _limit_blas_threads() -> None:
    # worker matrices are tiny; BLAS thread fan-out only adds contention
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1)
    except ImportError:  # pragma: no cover
        pass


def _evaluate_filters(dataset: SimulatedDataset, process, meas, specs,
                      steps: int) -> dict:
    stats = {}
    for spec in specs:
        trace = run_filter(spec, dataset, process, meas)
        if trace.failed:
            ssq_p = ssq_v = float("inf")
        else:
            ssq_p = _squared_errors(trace.means, dataset.truths, POSITION_INDICES)
            ssq_v = _squared_errors(trace.means, dataset.truths, VELOCITY_INDICES)
        run_armse_p = np.sqrt(ssq_p / steps)
        stats[spec.label] = {
            "ssq_p": ssq_p,
            "ssq_v": ssq_v,
            "failed": bool(trace.failed or run_armse_p > ARMSE_FAILURE_M),
            "wall_s": trace.wall_seconds,
        }
    return stats


def _run_point_task(payload: tuple) -> tuple[int, str, dict]:
    """One Monte Carlo run of every filter at one configuration point."""
    (experiment, delta, ill_delta, steps, em_step, run_seed, specs) = payload
    process, meas = build_models(experiment, ill_delta)
    noise = {"kind": meas.name}
    if ill_delta is not None:
        noise["delta"] = ill_delta
    dataset = simulate_dataset(process, meas, CT_INITIAL_MEAN, CT_INITIAL_COV,
                               delta, steps, em_step, run_seed, noise=noise)
    stats = _evaluate_filters(dataset, process, meas, specs, steps)
    return run_seed, dataset.digest(), stats


def _run_illcond_task(payload: tuple) -> tuple[int, dict]:
    """One Monte Carlo run across the whole conditioning sweep.

    All deltas measure the identical truth trajectory (the truth stream of
    ``run_seed`` is independent of the measurement model), so the expensive
    simulation runs once per task.
    """
    (ill_deltas, delta, steps, em_step, run_seed, specs) = payload
    process = coordinated_turn_model()
    x0_true, truths = simulate_truth(process, CT_INITIAL_MEAN, CT_INITIAL_COV,
                                     delta, steps, em_step, run_seed)
    per_delta = {}
    for ill in ill_deltas:
        meas = illcond_model(ill)
        dataset = attach_measurements(
            truths, x0_true, process, meas, CT_INITIAL_MEAN, CT_INITIAL_COV,
            delta, em_step, run_seed, noise={"kind": meas.name, "delta": ill})
        stats = _evaluate_filters(dataset, process, meas, specs, steps)
        per_delta[ill] = (dataset.digest(), stats)
    return run_seed, per_delta


def _points(cfg: ExperimentConfig) -> list[tuple[float, float | None]]:
    if cfg.experiment == "illcond":
        return [(delta, ill) for delta in cfg.deltas for ill in cfg.ill_deltas]
    return [(delta, None) for delta in cfg.deltas]


def monte_carlo(cfg: ExperimentConfig) -> SweepResult:
    """Run every (filter, configuration point) cell of ``cfg``.

    Returns rows ordered by point then filter, plus per-point dataset
    digests keyed by (delta, ill_delta) for fairness checks.
    """
    specs = tuple(FilterSpec(s.family, s.variant, s.ukf_params, cfg.tolerances())
                  for s in cfg.filters)
    points = _points(cfg)
    workers = _worker_count(cfg.runs)

    def run_tasks(task_fn, tasks):
        if workers == 1 or len(tasks) == 1:
            return [task_fn(t) for t in tasks]
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_limit_blas_threads) as pool:
            return list(pool.map(task_fn, tasks, chunksize=1))

    # outcome[(delta, ill)] = list over runs of (digest, per-filter stats)
    outcome: dict = {point: [None] * cfg.runs for point in points}
    if cfg.experiment == "illcond":
        # one task per run: every delta measures the same simulated truth
        for delta in cfg.deltas:
            steps = cfg.step_count(delta)
            tasks = [(cfg.ill_deltas, delta, steps, cfg.em_step_s,
                      cfg.seed + r, specs) for r in range(cfg.runs)]
            for run_seed, per_delta in run_tasks(_run_illcond_task, tasks):
                r = run_seed - cfg.seed
                for ill, (digest, stats) in per_delta.items():
                    outcome[(delta, ill)][r] = (digest, stats)
    else:
        tasks = []
        for delta, ill in points:
            steps = cfg.step_count(delta)
            tasks += [(cfg.experiment, delta, ill, steps, cfg.em_step_s,
                       cfg.seed + r, specs) for r in range(cfg.runs)]
        results = run_tasks(_run_point_task, tasks)
        cursor = 0
        for delta, ill in points:
            chunk = sorted(results[cursor:cursor + cfg.runs], key=lambda o: o[0])
            cursor += cfg.runs
            outcome[(delta, ill)] = [(digest, stats) for _, digest, stats in chunk]

    rows: list[ResultRow] = []
    digests: dict = {}
    for delta, ill in points:
        steps = cfg.step_count(delta)
        runs = outcome[(delta, ill)]
        digests[(delta, ill)] = [digest for digest, _ in runs]
        for spec in specs:
            ssq_p = ssq_v = 0.0
            wall = 0.0
            failed = False
            for _, stats in runs:
                cell = stats[spec.label]
                ssq_p += cell["ssq_p"]
                ssq_v += cell["ssq_v"]
                wall += cell["wall_s"]
                failed = failed or cell["failed"]
            armse_p = float(np.sqrt(ssq_p / (cfg.runs * steps)))
            armse_v = float(np.sqrt(ssq_v / (cfg.runs * steps)))
            rows.append(ResultRow(
                experiment=cfg.experiment, family=spec.family,
                variant=spec.variant, delta_s=delta, delta_ill=ill,
                runs=cfg.runs, seed=cfg.seed, tol=cfg.tol,
                armse_p=armse_p, armse_v=armse_v,
                failed=bool(failed or armse_p > ARMSE_FAILURE_M),
                cpu_s=wall / cfg.runs))
    return SweepResult(rows=rows, digests=digests)


def sweep_delta(cfg: ExperimentConfig) -> SweepResult:
    """Sampling-period sweep; the sweep variable is ``delta_s``."""
    return monte_carlo(cfg)


def sweep_illcond(cfg: ExperimentConfig) -> SweepResult:
    """Ill-conditioning sweep: records per-filter breakdown values.

    The breakdown value is the largest delta at which a filter fails.  A
    failure pattern that recovers at a smaller delta violates monotonicity
    and is flagged (never hidden) in ``monotonicity_violations``.
    """
    if cfg.experiment != "illcond":
        raise ConfigError("sweep_illcond requires the illcond experiment")
    result = monte_carlo(cfg)
    by_label: dict[str, list[tuple[float, bool]]] = {}
    for row in result.rows:
        by_label.setdefault(row.label, []).append((row.delta_ill, row.failed))
    for label, cells in by_label.items():
        cells.sort(key=lambda c: -c[0])  # decreasing delta
        failing = [d for d, bad in cells if bad]
        result.breakdown[label] = max(failing) if failing else None
        seen_failure = False
        for _, bad in cells:
            if bad:
                seen_failure = True
            elif seen_failure:
                result.monotonicity_violations.append(label)
                break
    return result


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_outputs(rows: list[ResultRow], out_dir: str | Path,
                  config: ExperimentConfig | None = None,
                  sweep: SweepResult | None = None,
                  sweep_variable: str | None = None) -> dict[str, Path]:
    """Write results.csv, manifest.json and (for sweeps) SVG + PNG figures.

    ``sweep_variable`` selects the x-axis: "delta_s" or "delta_ill".
    IO failures surface as OSError with the offending path in the message.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc

    paths: dict[str, Path] = {}
    csv_path = out_dir / "results.csv"
    try:
        with csv_path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(RESULT_CSV_HEADER)
            for row in rows:
                writer.writerow([_format_value(v) for v in (
                    row.experiment, row.family, row.variant, row.delta_s,
                    row.delta_ill, row.runs, row.seed, row.tol,
                    row.armse_p, row.armse_v, row.failed, row.cpu_s)])
    except OSError as exc:
        raise OSError(f"cannot write {csv_path}: {exc}") from exc
    paths["csv"] = csv_path

    manifest_path = out_dir / "manifest.json"
    manifest = {"config": config.to_dict() if config else None}
    if sweep is not None:
        manifest["breakdown"] = sweep.breakdown
        manifest["monotonicity_violations"] = sweep.monotonicity_violations
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    paths["manifest"] = manifest_path

    if sweep_variable is not None and rows:
        from .report import write_sweep_png, write_sweep_svg

        svg_path = out_dir / f"sweep_{sweep_variable}.svg"
        write_sweep_svg(svg_path, rows, sweep_variable,
                        breakdown=sweep.breakdown if sweep else None)
        paths["svg"] = svg_path
        png_path = out_dir / f"sweep_{sweep_variable}.png"
        write_sweep_png(png_path, rows, sweep_variable,
                        breakdown=sweep.breakdown if sweep else None)
        paths["png"] = png_path
    return paths


def read_results_csv(path: str | Path) -> list[ResultRow]:
    """Parse a results.csv back into rows (round-trips ``write_outputs``)."""
    rows = []
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        for rec in reader:
            rows.append(ResultRow(
                experiment=rec["experiment"], family=rec["filter"],
                variant=rec["variant"], delta_s=float(rec["delta_s"]),
                delta_ill=float(rec["deltaIll"]) if rec["deltaIll"] else None,
                runs=int(rec["runs"]), seed=int(rec["seed"]),
                tol=float(rec["tol"]), armse_p=float(rec["armse_p_m"]),
                armse_v=float(rec["armse_v_mps"]),
                failed=rec["failed"] == "true", cpu_s=float(rec["cpu_s"])))
    return rows

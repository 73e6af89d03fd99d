"""Experiment runners: simulate, detect, solve, and report in one sweep.

Each runner draws every tap's randomness from a single generator seeded by the
experiment seed, in a fixed (position, repetition) order, so a run is
reproducible end to end and equals the same stages chained by hand. Reports
are plain rows plus a summary; emitted files contain no volatile metadata, so
identical seeds produce byte-identical output.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .calibration import (
    AxisFit,
    CalibrationProfile,
    CalibrationQualityWarning,
    CalibrationSample,
    SingularFitError,
    fit_axis,
    location_stats,
)
from .config import ExperimentSpec, Scenario, TapGrid
from .geometry import (
    InfeasibleObservationError,
    NoIntersectionError,
    TapEstimate,
    distance_differences,
    locate_tap,
)
from .signal_pipeline import SensorPair, TdoaObservation, run_detector
from .surface_sim import SynthesizedCapture, make_tap, synthesize

# Calibrations below this coefficient of determination are suspect.
CALIBRATION_R2_FLOOR = 0.9
# Fewer distinct positions than this still fits, but with little redundancy.
SPARSE_CALIBRATION_POSITIONS = 5


@dataclass
class RunReport:
    """Tabular result of one experiment run.

    ``rows`` all share ``columns``; ``summary`` holds the headline numbers.
    ``runtime_s`` is kept out of emitted files so golden-file comparisons
    stay byte-stable.
    """

    kind: str
    seed: int
    sample_rate: int
    columns: list[str]
    rows: list[dict]
    summary: dict
    notes: list[str] = field(default_factory=list)
    fits: dict[str, AxisFit] = field(default_factory=dict)
    runtime_s: float = 0.0


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    if value is None:
        return ""
    return str(value)


def report_emit(report: RunReport, fmt: str, path: str | Path) -> Path:
    """Write a report as ``csv`` (rows only) or ``text`` (summary plus rows).

    Column order is fixed by the report and floats carry 9 significant
    digits, so output is deterministic for a given report.
    """
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(report.columns)
            for row in report.rows:
                writer.writerow([_fmt(row.get(col)) for col in report.columns])
    elif fmt == "text":
        lines = [f"kind = {report.kind}", f"seed = {report.seed}"]
        for key, value in report.summary.items():
            lines.append(f"{key} = {_fmt(value)}")
        for note in report.notes:
            lines.append(f"note: {note}")
        lines.append("")
        lines.append("\t".join(report.columns))
        for row in report.rows:
            lines.append("\t".join(_fmt(row.get(col)) for col in report.columns))
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError("format must be 'csv' or 'text'")
    return path


def iter_tap_captures(
    spec_grid: TapGrid, scenario: Scenario, seed: int
) -> Iterator[tuple[tuple[float, float], int, SynthesizedCapture]]:
    """Simulate every (position, repetition) in order from one seeded stream.

    This is the canonical randomness order for all runners; chaining
    simulator, detector and solver by hand through this generator reproduces
    any experiment exactly.
    """
    rng = np.random.default_rng(seed)
    for position in spec_grid.positions:
        for rep in range(spec_grid.repetitions):
            tap = make_tap(
                position,
                scenario.layout,
                scenario.surface,
                rng,
                device_offset_max_s=scenario.device_offset_max_s,
                sample_rate=scenario.detector.sample_rate,
            )
            capture = synthesize(tap, scenario.surface, scenario.detector, rng, scenario.layout)
            yield position, rep, capture


def _pair_observation(
    capture: SynthesizedCapture, pair: SensorPair, scenario: Scenario
) -> TdoaObservation | None:
    observations = run_detector(capture.chunk_stream(pair), scenario.detector)
    return observations[0] if observations else None


def run_linearity_1d(spec: ExperimentSpec) -> RunReport:
    """Taps along the line between the left/right sensors, fitted for
    linearity.

    Reports the measured time difference per location (mean and spread), the
    regression of distance difference on time difference, and every missed
    tap; misses are counted, never silently dropped.
    """
    started = time.perf_counter()
    scenario = spec.scenario
    samples: list[CalibrationSample] = []
    rows = []
    by_position: dict[float, list[float]] = {p[0]: [] for p in spec.grid.positions}
    missed = 0
    for position, _rep, capture in iter_tap_captures(spec.grid, scenario, spec.seed):
        obs = _pair_observation(capture, SensorPair.LEFT_RIGHT, scenario)
        if obs is None:
            missed += 1
            continue
        by_position[position[0]].append(obs.tdoa)
        samples.append(
            CalibrationSample(
                known_position=position[0],
                distance_diff=distance_differences(position, scenario.layout)[0],
                tdoa=obs.tdoa,
            )
        )
    try:
        fit = fit_axis(samples, axis="x")
    except (ValueError, SingularFitError):
        fit = None
    for x in sorted(by_position):
        tdoas = by_position[x]
        rows.append(
            {
                "position_cm": x,
                "requested": spec.grid.repetitions,
                "detected": len(tdoas),
                "mean_tdoa_s": float(np.mean(tdoas)) if tdoas else None,
                "stddev_tdoa_s": float(np.std(tdoas, ddof=1)) if len(tdoas) > 1 else 0.0,
            }
        )
    report = RunReport(
        kind="linearity_1d",
        seed=spec.seed,
        sample_rate=scenario.detector.sample_rate,
        columns=["position_cm", "requested", "detected", "mean_tdoa_s", "stddev_tdoa_s"],
        rows=rows,
        summary={
            "r_squared": fit.r_squared if fit else None,
            "speed_cm_per_s": fit.speed if fit else None,
            "requested": len(spec.grid.positions) * spec.grid.repetitions,
            "detected": len(samples),
            "missed": missed,
        },
        fits={"x": fit} if fit else {},
        runtime_s=time.perf_counter() - started,
    )
    if missed:
        report.notes.append(f"{missed} taps were not detected on both channels")
    if fit is None:
        report.notes.append("too few detected taps for a linear fit")
    return report


def run_sampling_sweep(spec: ExperimentSpec) -> RunReport:
    """The linearity experiment at two sampling rates with the same seed.

    Compares per-location spread and the regression quality; higher rates
    quantize the onset clock finer, so both should improve.
    """
    started = time.perf_counter()
    rate_low, rate_high = spec.sweep_rates
    sub_reports = {}
    for rate in (rate_low, rate_high):
        scenario = replace(spec.scenario, detector=replace(spec.scenario.detector, sample_rate=rate))
        sub = replace(spec, kind="linearity_1d", scenario=scenario)
        sub_reports[rate] = run_linearity_1d(sub)
    low_rows = {row["position_cm"]: row for row in sub_reports[rate_low].rows}
    high_rows = {row["position_cm"]: row for row in sub_reports[rate_high].rows}
    rows = []
    improved = 0
    comparable = 0
    for x in sorted(low_rows):
        s_low = low_rows[x]["stddev_tdoa_s"]
        s_high = high_rows[x]["stddev_tdoa_s"]
        if low_rows[x]["detected"] >= 2 and high_rows[x]["detected"] >= 2:
            comparable += 1
            improved += int(s_high < s_low)
        rows.append(
            {
                "position_cm": x,
                f"stddev_tdoa_s_{rate_low}": s_low,
                f"stddev_tdoa_s_{rate_high}": s_high,
                "improved": int(s_high < s_low),
            }
        )
    r2_low = sub_reports[rate_low].summary["r_squared"]
    r2_high = sub_reports[rate_high].summary["r_squared"]
    return RunReport(
        kind="sampling_sweep",
        seed=spec.seed,
        sample_rate=rate_high,
        columns=[
            "position_cm",
            f"stddev_tdoa_s_{rate_low}",
            f"stddev_tdoa_s_{rate_high}",
            "improved",
        ],
        rows=rows,
        summary={
            f"r_squared_{rate_low}": r2_low,
            f"r_squared_{rate_high}": r2_high,
            "r_squared_improved": int(r2_high > r2_low),
            "locations_improved": improved,
            "locations_compared": comparable,
            "fraction_improved": improved / comparable if comparable else 0.0,
        },
        fits={f"x@{rate_low}": sub_reports[rate_low].fits["x"],
              f"x@{rate_high}": sub_reports[rate_high].fits["x"]},
        runtime_s=time.perf_counter() - started,
    )


def _calibration_axis_run(
    grid: TapGrid, scenario: Scenario, seed: int, axis: str
) -> tuple[AxisFit, list[dict], int]:
    pair = SensorPair.LEFT_RIGHT if axis == "x" else SensorPair.TOP_BOTTOM
    samples: list[CalibrationSample] = []
    by_position: dict[float, list[float]] = {
        (p[0] if axis == "x" else p[1]): [] for p in grid.positions
    }
    missed = 0
    for position, _rep, capture in iter_tap_captures(grid, scenario, seed):
        obs = _pair_observation(capture, pair, scenario)
        coordinate = position[0] if axis == "x" else position[1]
        if obs is None:
            missed += 1
            continue
        deltas = distance_differences(position, scenario.layout)
        samples.append(
            CalibrationSample(
                known_position=coordinate,
                distance_diff=deltas[0] if axis == "x" else deltas[1],
                tdoa=obs.tdoa,
            )
        )
        by_position[coordinate].append(obs.tdoa)
    fit = fit_axis(samples, axis=axis)
    rows = [
        {
            "axis": axis,
            "position_cm": pos,
            "requested": grid.repetitions,
            "detected": len(tdoas),
            "mean_tdoa_s": float(np.mean(tdoas)) if tdoas else None,
            "stddev_tdoa_s": float(np.std(tdoas, ddof=1)) if len(tdoas) > 1 else 0.0,
        }
        for pos, tdoas in sorted(by_position.items())
    ]
    return fit, rows, missed


def run_calibrate(spec: ExperimentSpec) -> tuple[CalibrationProfile, RunReport]:
    """Fit both axis speeds from taps at known positions along each axis."""
    started = time.perf_counter()
    if spec.grid_y is None:
        raise ValueError("calibrate needs a y-axis grid")
    scenario = spec.scenario
    fit_x, rows_x, missed_x = _calibration_axis_run(spec.grid, scenario, spec.seed, "x")
    fit_y, rows_y, missed_y = _calibration_axis_run(spec.grid_y, scenario, spec.seed + 1, "y")
    profile = CalibrationProfile(fit_x=fit_x, fit_y=fit_y, layout=scenario.layout)
    notes = []
    for fit in (fit_x, fit_y):
        if fit.r_squared < CALIBRATION_R2_FLOOR:
            message = (
                f"{fit.axis}-axis calibration fit is poor (R^2 = {fit.r_squared:.4f}); "
                "the speed estimate is unreliable"
            )
            warnings.warn(message, CalibrationQualityWarning, stacklevel=2)
            notes.append(message)
    for grid, axis in ((spec.grid, "x"), (spec.grid_y, "y")):
        if len(grid.positions) < SPARSE_CALIBRATION_POSITIONS:
            notes.append(
                f"{axis}-axis calibration used only {len(grid.positions)} positions; "
                "confidence is wider than with a full sweep"
            )
    report = RunReport(
        kind="calibrate",
        seed=spec.seed,
        sample_rate=scenario.detector.sample_rate,
        columns=["axis", "position_cm", "requested", "detected", "mean_tdoa_s", "stddev_tdoa_s"],
        rows=rows_x + rows_y,
        summary={
            "speed_x_cm_per_s": fit_x.speed,
            "speed_y_cm_per_s": fit_y.speed,
            "r2_x": fit_x.r_squared,
            "r2_y": fit_y.r_squared,
            "missed": missed_x + missed_y,
        },
        notes=notes,
        fits={"x": fit_x, "y": fit_y},
        runtime_s=time.perf_counter() - started,
    )
    return profile, report


def run_accuracy_2d(
    spec: ExperimentSpec, profile: CalibrationProfile
) -> tuple[RunReport, list[tuple[tuple[float, float], TapEstimate]]]:
    """Grid taps through the full pipeline: detect, convert, solve, score.

    Every tap either contributes an estimate or is recorded as a failure with
    its reason; detected plus failed always equals requested.
    """
    started = time.perf_counter()
    scenario = spec.scenario
    groups: dict[tuple[float, float], list[TapEstimate]] = {
        p: [] for p in spec.grid.positions
    }
    estimates: list[tuple[tuple[float, float], TapEstimate]] = []
    failures: list[dict] = []
    for position, rep, capture in iter_tap_captures(spec.grid, scenario, spec.seed):
        obs_lr = _pair_observation(capture, SensorPair.LEFT_RIGHT, scenario)
        obs_tb = _pair_observation(capture, SensorPair.TOP_BOTTOM, scenario)
        reason = None
        if obs_lr is None and obs_tb is None:
            reason = "missed on both devices"
        elif obs_lr is None:
            reason = "missed on the left/right device"
        elif obs_tb is None:
            reason = "missed on the top/bottom device"
        else:
            try:
                estimate = locate_tap(
                    obs_lr,
                    obs_tb,
                    scenario.layout,
                    profile.speed_x,
                    profile.speed_y,
                    correct_anisotropy=scenario.correct_anisotropy,
                )
            except (InfeasibleObservationError, NoIntersectionError) as exc:
                reason = f"unsolvable: {exc}"
            else:
                groups[position].append(estimate)
                estimates.append((position, estimate))
        if reason is not None:
            failures.append({"position": position, "rep": rep, "reason": reason})
    solved_groups = {pos: ests for pos, ests in groups.items() if ests}
    stats = location_stats(solved_groups) if solved_groups else None
    per_location = {(s.true_x, s.true_y): s for s in (stats.per_location if stats else ())}
    rows = []
    for position in sorted(groups):
        entry = per_location.get(position)
        rows.append(
            {
                "true_x_cm": position[0],
                "true_y_cm": position[1],
                "requested": spec.grid.repetitions,
                "detected": len(groups[position]),
                "mean_x_cm": entry.mean_x if entry else None,
                "mean_y_cm": entry.mean_y if entry else None,
                "stddev_x_cm": entry.stddev_x if entry else None,
                "stddev_y_cm": entry.stddev_y if entry else None,
                "mean_abs_err_x_cm": entry.mean_abs_err_x if entry else None,
                "mean_abs_err_y_cm": entry.mean_abs_err_y if entry else None,
            }
        )
    requested = len(spec.grid.positions) * spec.grid.repetitions
    report = RunReport(
        kind="accuracy_2d",
        seed=spec.seed,
        sample_rate=scenario.detector.sample_rate,
        columns=[
            "true_x_cm",
            "true_y_cm",
            "requested",
            "detected",
            "mean_x_cm",
            "mean_y_cm",
            "stddev_x_cm",
            "stddev_y_cm",
            "mean_abs_err_x_cm",
            "mean_abs_err_y_cm",
        ],
        rows=rows,
        summary={
            "mean_abs_err_x_cm": stats.mean_abs_err_x if stats else None,
            "mean_abs_err_y_cm": stats.mean_abs_err_y if stats else None,
            "requested": requested,
            "solved": len(estimates),
            "failed": len(failures),
        },
        runtime_s=time.perf_counter() - started,
    )
    for failure in failures:
        report.notes.append(
            f"tap at {failure['position']} rep {failure['rep']}: {failure['reason']}"
        )
    return report, estimates

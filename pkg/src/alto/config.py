"""Flat key-value scenario configuration.

Scenario files pin every knob of a run so experiments are reproducible from a
file plus a seed. Keys are namespaced (``surface.speed_x_cm_per_s``,
``detector.detect_threshold``, ``layout.half_sep_x_cm``); unknown keys are
rejected so typos cannot silently fall back to defaults. Precedence is
defaults, then the config file, then explicit overrides (CLI flags).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .geometry import SensorLayout
from .signal_pipeline import DetectorConfig
from .surface_sim import SurfaceModel

DEFAULT_CONFIG: dict[str, str] = {
    "seed": "42",
    "layout.half_sep_x_cm": "26.0",
    "layout.half_sep_y_cm": "26.0",
    "surface.speed_x_cm_per_s": "45014.0",
    "surface.speed_y_cm_per_s": "37259.0",
    "surface.noise_stddev": "60.0",
    "surface.peak_amplitude": "12000",
    "surface.attenuation_per_cm": "0.015",
    "surface.rise_samples": "8",
    "surface.decay_constant_samples": "1200.0",
    "surface.onset_jitter_stddev_samples": "2.0",
    "detector.detect_threshold": "1000",
    "detector.onset_threshold": "500",
    "detector.debounce_chunks": "5",
    "detector.chunk_size": "8192",
    "detector.sample_rate": "192000",
    "sim.device_offset_max_s": "0.02",
    "sim.bound_cm": "30.0",
    "sim.tap_spacing_s": "0.5",
    "grid.min_cm": "-20.0",
    "grid.max_cm": "20.0",
    "grid.step_cm": "10.0",
    "grid.repetitions": "10",
    "linearity.span_cm": "20.0",
    "linearity.step_cm": "2.5",
    "linearity.repetitions": "10",
    "calibration.span_cm": "20.0",
    "calibration.step_cm": "1.0",
    "calibration.repetitions": "10",
    "sweep.rates": "44100,192000",
    "locate.correct_anisotropy": "true",
    "taps": "",
}


def load_config(path: str | Path) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment, blanks are skipped."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def merge_config(*layers: Mapping[str, str]) -> dict[str, str]:
    """Later layers win; every key must exist in the defaults."""
    merged = dict(DEFAULT_CONFIG)
    for layer in layers:
        for key, value in layer.items():
            if key not in DEFAULT_CONFIG:
                raise KeyError(f"unknown configuration key {key!r}")
            merged[key] = value
    return merged


def _as_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs besides the tap schedule."""

    layout: SensorLayout
    surface: SurfaceModel
    detector: DetectorConfig
    device_offset_max_s: float
    bound_cm: float
    tap_spacing_s: float
    correct_anisotropy: bool
    seed: int


def scenario_from_config(cfg: Mapping[str, str]) -> Scenario:
    layout = SensorLayout(
        half_sep_x=float(cfg["layout.half_sep_x_cm"]),
        half_sep_y=float(cfg["layout.half_sep_y_cm"]),
    )
    surface = SurfaceModel(
        speed_x=float(cfg["surface.speed_x_cm_per_s"]),
        speed_y=float(cfg["surface.speed_y_cm_per_s"]),
        noise_stddev=float(cfg["surface.noise_stddev"]),
        peak_amplitude=int(cfg["surface.peak_amplitude"]),
        attenuation_per_cm=float(cfg["surface.attenuation_per_cm"]),
        rise_samples=int(cfg["surface.rise_samples"]),
        decay_constant=float(cfg["surface.decay_constant_samples"]),
        onset_jitter_stddev=float(cfg["surface.onset_jitter_stddev_samples"]),
    )
    detector = DetectorConfig(
        detect_threshold=int(cfg["detector.detect_threshold"]),
        onset_threshold=int(cfg["detector.onset_threshold"]),
        debounce_chunks=int(cfg["detector.debounce_chunks"]),
        chunk_size=int(cfg["detector.chunk_size"]),
        sample_rate=int(cfg["detector.sample_rate"]),
    )
    return Scenario(
        layout=layout,
        surface=surface,
        detector=detector,
        device_offset_max_s=float(cfg["sim.device_offset_max_s"]),
        bound_cm=float(cfg["sim.bound_cm"]),
        tap_spacing_s=float(cfg["sim.tap_spacing_s"]),
        correct_anisotropy=_as_bool(cfg["locate.correct_anisotropy"]),
        seed=int(cfg["seed"]),
    )


@dataclass(frozen=True)
class TapGrid:
    positions: tuple[tuple[float, float], ...]
    repetitions: int

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.positions:
            raise ValueError("need at least one tap position")


@dataclass(frozen=True)
class ExperimentSpec:
    """A fully pinned experiment: what to tap, on which scenario, which seed."""

    kind: str
    scenario: Scenario
    grid: TapGrid
    seed: int
    sweep_rates: tuple[int, int] = (44100, 192000)
    grid_y: TapGrid | None = None  # calibrate runs a second grid on the y axis

    def __post_init__(self) -> None:
        if self.kind not in ("linearity_1d", "sampling_sweep", "calibrate", "accuracy_2d"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        bound = self.scenario.bound_cm
        grids = [self.grid] + ([self.grid_y] if self.grid_y else [])
        for grid in grids:
            for x, y in grid.positions:
                if abs(x) > bound or abs(y) > bound:
                    raise ValueError(
                        f"tap ({x:g}, {y:g}) lies outside the surface bound "
                        f"{bound:g} cm"
                    )


def _axis_positions(span: float, step: float) -> list[float]:
    if step <= 0 or span <= 0:
        raise ValueError("span and step must be positive")
    n = int(round(span / step))
    return [round(i * step - span, 9) for i in range(2 * n + 1)]


def parse_tap_list(text: str) -> list[tuple[float, float]]:
    """Parse an explicit tap list like ``-10,5; 0,0; 12.5,-7``."""
    taps = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(",")
        if len(parts) != 2:
            raise ValueError(f"expected 'x,y', got {item!r}")
        taps.append((float(parts[0]), float(parts[1])))
    return taps


def experiment_from_config(kind: str, cfg: Mapping[str, str]) -> ExperimentSpec:
    """Assemble the tap schedule for one experiment kind from a merged config."""
    scenario = scenario_from_config(cfg)
    if kind in ("linearity_1d", "sampling_sweep"):
        xs = _axis_positions(float(cfg["linearity.span_cm"]), float(cfg["linearity.step_cm"]))
        grid = TapGrid(
            positions=tuple((x, 0.0) for x in xs),
            repetitions=int(cfg["linearity.repetitions"]),
        )
        rates = tuple(int(r) for r in cfg["sweep.rates"].split(","))
        if len(rates) != 2:
            raise ValueError("sweep.rates must list exactly two rates")
        return ExperimentSpec(
            kind=kind, scenario=scenario, grid=grid, seed=scenario.seed, sweep_rates=rates
        )
    if kind == "calibrate":
        span = float(cfg["calibration.span_cm"])
        step = float(cfg["calibration.step_cm"])
        reps = int(cfg["calibration.repetitions"])
        positions = _axis_positions(span, step)
        return ExperimentSpec(
            kind=kind,
            scenario=scenario,
            grid=TapGrid(tuple((x, 0.0) for x in positions), reps),
            grid_y=TapGrid(tuple((0.0, y) for y in positions), reps),
            seed=scenario.seed,
        )
    if kind == "accuracy_2d":
        explicit = cfg.get("taps", "").strip()
        if explicit:
            positions = tuple(parse_tap_list(explicit))
        else:
            lo = float(cfg["grid.min_cm"])
            hi = float(cfg["grid.max_cm"])
            step = float(cfg["grid.step_cm"])
            n = int(round((hi - lo) / step))
            marks = [round(lo + i * step, 9) for i in range(n + 1)]
            positions = tuple((x, y) for x in marks for y in marks)
        grid = TapGrid(positions=positions, repetitions=int(cfg["grid.repetitions"]))
        return ExperimentSpec(kind=kind, scenario=scenario, grid=grid, seed=scenario.seed)
    raise ValueError(f"unknown experiment kind {kind!r}")

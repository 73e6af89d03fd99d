"""Per-axis speed calibration and accuracy statistics.

The surface is calibrated one axis at a time: taps at known positions along
the line between a sensor pair give (time difference, distance difference)
points, and the slope of the least-squares line through them is the
propagation speed along that axis in cm/s. The two axes are fitted and stored
separately end to end, so anisotropic surfaces are representable without any
special casing.
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import SensorLayout, TapEstimate


class SingularFitError(ValueError):
    """The regressor values do not vary; no line can be fitted."""


class RangeWarning(UserWarning):
    """A mapped 1D position fell outside the span between the sensors."""


class CalibrationQualityWarning(UserWarning):
    """The linear fit is too poor to trust as a speed calibration."""


@dataclass(frozen=True)
class CalibrationSample:
    """One tap at a known position along a calibration axis.

    ``distance_diff`` is the exact geometric distance difference to the
    axis's sensor pair (cm, signed per the pair convention); ``tdoa`` is what
    the detector measured (s).
    """

    known_position: float
    distance_diff: float
    tdoa: float


@dataclass(frozen=True)
class AxisFit:
    """Least-squares calibration of one axis.

    ``speed`` is the slope of distance difference regressed on time
    difference, i.e. cm/s directly. The intercept (cm) is fitted rather than
    forced through zero so it can absorb a systematic one-sided onset
    detection delay. ``per_location_stddev`` holds (position, stddev of tdoa)
    for repeated taps, the error-bar quantity.
    """

    axis: str
    speed: float
    intercept: float
    r_squared: float
    per_location_stddev: tuple[tuple[float, float], ...]


def _stddev(values: Sequence[float]) -> float:
    # Sample stddev (n-1); a single measurement has no spread to report.
    if len(values) < 2:
        return 0.0
    return float(np.std(np.asarray(values, dtype=float), ddof=1))


def fit_axis(samples: Sequence[CalibrationSample], axis: str = "x") -> AxisFit:
    """Ordinary least squares of distance_diff on tdoa for one axis.

    The regression orientation is fixed so the slope is the speed: swapping
    it would change the fitted speed under noise.
    """
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    if len({s.distance_diff for s in samples}) < 2:
        raise ValueError("need samples at two or more distinct distance differences")
    t = np.asarray([s.tdoa for s in samples], dtype=float)
    d = np.asarray([s.distance_diff for s in samples], dtype=float)
    t_mean = t.mean()
    d_mean = d.mean()
    s_tt = float(np.sum((t - t_mean) ** 2))
    if s_tt == 0.0:
        raise SingularFitError("all tdoa values are identical; slope is undefined")
    slope = float(np.sum((t - t_mean) * (d - d_mean))) / s_tt
    intercept = float(d_mean - slope * t_mean)
    ss_res = float(np.sum((d - (slope * t + intercept)) ** 2))
    ss_tot = float(np.sum((d - d_mean) ** 2))
    r_squared = 1.0 - ss_res / ss_tot

    by_position: dict[float, list[float]] = defaultdict(list)
    for s in samples:
        by_position[s.known_position].append(s.tdoa)
    per_location = tuple(
        (pos, _stddev(vals)) for pos, vals in sorted(by_position.items())
    )
    return AxisFit(
        axis=axis,
        speed=slope,
        intercept=intercept,
        r_squared=r_squared,
        per_location_stddev=per_location,
    )


def one_d_position(
    tdoa: float,
    fit: AxisFit,
    origin_offset: float,
    half_sep: float | None = None,
) -> float:
    """Map a signed pair lag to a position along the line between the sensors.

    ``origin_offset`` is where the midpoint of the pair sits in the caller's
    coordinate frame; a zero lag maps there. Positive tdoa (first-listed
    sensor heard it first) moves toward that sensor, giving the single signed
    formula position = origin_offset - (speed * tdoa + intercept) / 2, whose
    slope magnitude is half the propagation speed.

    When ``half_sep`` is given, results outside the span between the sensors
    (plus 10%) raise a RangeWarning but are still returned.
    """
    position = origin_offset - (fit.speed * tdoa + fit.intercept) / 2
    if half_sep is not None and abs(position - origin_offset) > 1.1 * half_sep:
        warnings.warn(
            f"mapped position {position:.3g} lies outside the sensor span",
            RangeWarning,
            stacklevel=2,
        )
    return position


@dataclass(frozen=True)
class LocationErrorStats:
    """Accuracy statistics for repeated taps at one true position."""

    true_x: float
    true_y: float
    count: int
    mean_x: float
    mean_y: float
    stddev_x: float
    stddev_y: float
    mean_abs_err_x: float
    mean_abs_err_y: float


@dataclass(frozen=True)
class AccuracySummary:
    per_location: tuple[LocationErrorStats, ...]
    mean_abs_err_x: float
    mean_abs_err_y: float
    count: int


def location_stats(
    groups: Mapping[tuple[float, float], Sequence[TapEstimate]]
    | Iterable[tuple[tuple[float, float], Sequence[TapEstimate]]],
) -> AccuracySummary:
    """Per-location and overall accuracy of estimates grouped by true position.

    Reports per-axis mean absolute error and the per-group sample standard
    deviation of the estimates (the error-bar quantity). The overall means
    weight every estimate equally.
    """
    items = list(groups.items()) if isinstance(groups, Mapping) else list(groups)
    if not items or all(len(ests) == 0 for _, ests in items):
        raise ValueError("need at least one estimate")
    rows = []
    abs_x: list[float] = []
    abs_y: list[float] = []
    for (tx, ty), estimates in sorted(items, key=lambda kv: kv[0]):
        if not estimates:
            raise ValueError(f"empty group at ({tx}, {ty})")
        xs = [e.x for e in estimates]
        ys = [e.y for e in estimates]
        err_x = [abs(x - tx) for x in xs]
        err_y = [abs(y - ty) for y in ys]
        abs_x.extend(err_x)
        abs_y.extend(err_y)
        rows.append(
            LocationErrorStats(
                true_x=tx,
                true_y=ty,
                count=len(estimates),
                mean_x=float(np.mean(xs)),
                mean_y=float(np.mean(ys)),
                stddev_x=_stddev(xs),
                stddev_y=_stddev(ys),
                mean_abs_err_x=float(np.mean(err_x)),
                mean_abs_err_y=float(np.mean(err_y)),
            )
        )
    return AccuracySummary(
        per_location=tuple(rows),
        mean_abs_err_x=float(np.mean(abs_x)),
        mean_abs_err_y=float(np.mean(abs_y)),
        count=len(abs_x),
    )


@dataclass(frozen=True)
class CalibrationProfile:
    """Fitted per-axis speeds plus the layout they were measured on."""

    fit_x: AxisFit
    fit_y: AxisFit
    layout: SensorLayout

    @property
    def speed_x(self) -> float:
        return self.fit_x.speed

    @property
    def speed_y(self) -> float:
        return self.fit_y.speed


_PROFILE_KEYS = (
    "speed_x_cm_per_s",
    "speed_y_cm_per_s",
    "intercept_x",
    "intercept_y",
    "r2_x",
    "r2_y",
    "layout.half_sep_x",
    "layout.half_sep_y",
)


def write_profile(profile: CalibrationProfile, path: str | Path) -> None:
    """Write the calibration profile as flat key-value text."""
    values = {
        "speed_x_cm_per_s": profile.fit_x.speed,
        "speed_y_cm_per_s": profile.fit_y.speed,
        "intercept_x": profile.fit_x.intercept,
        "intercept_y": profile.fit_y.intercept,
        "r2_x": profile.fit_x.r_squared,
        "r2_y": profile.fit_y.r_squared,
        "layout.half_sep_x": profile.layout.half_sep_x,
        "layout.half_sep_y": profile.layout.half_sep_y,
    }
    lines = [f"{key} = {float(values[key])!r}" for key in _PROFILE_KEYS]
    Path(path).write_text("\n".join(lines) + "\n")


def read_profile(path: str | Path) -> CalibrationProfile:
    values: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = float(value.strip())
    missing = [k for k in _PROFILE_KEYS if k not in values]
    if missing:
        raise ValueError(f"profile {path} is missing keys: {', '.join(missing)}")
    fit_x = AxisFit(
        axis="x",
        speed=values["speed_x_cm_per_s"],
        intercept=values["intercept_x"],
        r_squared=values["r2_x"],
        per_location_stddev=(),
    )
    fit_y = AxisFit(
        axis="y",
        speed=values["speed_y_cm_per_s"],
        intercept=values["intercept_y"],
        r_squared=values["r2_y"],
        per_location_stddev=(),
    )
    layout = SensorLayout(values["layout.half_sep_x"], values["layout.half_sep_y"])
    return CalibrationProfile(fit_x=fit_x, fit_y=fit_y, layout=layout)

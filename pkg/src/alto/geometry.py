"""Hyperbolic position solving from per-pair time differences.

Four sensors sit on a cross: left/right at (-half_sep_x, 0) and
(+half_sep_x, 0), bottom/top at (0, -half_sep_y) and (0, +half_sep_y). A
signed time difference for a pair constrains the tap to one branch of a
hyperbola whose vertex sits half the distance difference from the origin; the
two device pairs give two hyperbolas, and their intersection is the tap.

Sign handling, stated once and used everywhere: deltas inherit the stream
convention (``delta = tdoa * speed``, so positive means the pair's
first-listed sensor, left or top, was closer), but the closed-form solver
consumes only the intercept magnitudes and takes the signs of the output
coordinates from the first-arrival quadrant hint. The delta sign convention
therefore never leaks into solved positions.

The solver is the closed-form intersection; ``oracle_solve`` is a deliberately
independent brute-force grid search over distance-difference residuals, kept
free of the closed form so the two can check each other.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .signal_pipeline import Channel, SensorPair, TdoaObservation

# Below this intercept magnitude (cm) a hyperbola is treated as degenerate:
# the branch collapses onto the axis and the closed form is replaced by the
# limiting case. Double-precision conditioning collapses near the same scale.
DEGENERATE_INTERCEPT_CM = 1e-9

# A squared-coordinate radicand more negative than this (relative to the
# layout scale) means the two hyperbolas genuinely do not intersect.
NEGATIVE_RADICAND_REL_TOL = 1e-9

# For taps far outside the cross the two branches intersect at grazing
# incidence and the oracle's objective becomes a long shallow canyon of
# near-tied cells; the refinement pass therefore runs around every coarse
# cell within ORACLE_CANDIDATE_FACTOR of the best value (up to
# ORACLE_CANDIDATE_CELLS of them), not just the single argmin.
ORACLE_CANDIDATE_CELLS = 40
ORACLE_CANDIDATE_FACTOR = 200.0


class InfeasibleObservationError(ValueError):
    """A distance difference exceeds what the sensor geometry allows."""


class DegenerateHyperbolaError(ValueError):
    """The intercept sits on a degeneracy (0 or the half separation)."""


class NoIntersectionError(ValueError):
    """The two hyperbola branches do not intersect; observations disagree."""


class SearchBoxTooSmallError(ValueError):
    """The oracle's best point landed on the search box boundary."""


@dataclass(frozen=True)
class SensorLayout:
    """Half separations of the sensor cross, in cm."""

    half_sep_x: float = 26.0
    half_sep_y: float = 26.0

    def __post_init__(self) -> None:
        if self.half_sep_x <= 0 or self.half_sep_y <= 0:
            raise ValueError("half separations must be positive")

    def sensor_positions(self) -> dict[Channel, tuple[float, float]]:
        return {
            Channel.LEFT: (-self.half_sep_x, 0.0),
            Channel.RIGHT: (self.half_sep_x, 0.0),
            Channel.TOP: (0.0, self.half_sep_y),
            Channel.BOTTOM: (0.0, -self.half_sep_y),
        }

    def half_sep(self, pair: SensorPair) -> float:
        return self.half_sep_x if pair is SensorPair.LEFT_RIGHT else self.half_sep_y


@dataclass(frozen=True)
class DeltaDistance:
    """Signed distance difference (cm) for one pair, second minus first sensor."""

    pair: SensorPair
    delta: float


@dataclass(frozen=True)
class QuadrantHint:
    """Which signs the solved coordinates take, from the first arrivals.

    ``sign_x``/``sign_y`` are -1, 0 or +1; zero marks a tie, pinning the tap
    to the corresponding axis (or the origin when both are zero).
    """

    sign_x: int
    sign_y: int

    @property
    def label(self) -> str:
        if self.sign_x > 0 and self.sign_y > 0:
            return "I"
        if self.sign_x < 0 and self.sign_y > 0:
            return "II"
        if self.sign_x < 0 and self.sign_y < 0:
            return "III"
        if self.sign_x > 0 and self.sign_y < 0:
            return "IV"
        if self.sign_x != 0:
            return "axis-x+" if self.sign_x > 0 else "axis-x-"
        if self.sign_y != 0:
            return "axis-y+" if self.sign_y > 0 else "axis-y-"
        return "origin"


@dataclass(frozen=True)
class HyperbolaIntercepts:
    """Signed axis intercepts a = delta_LR / 2 and b = delta_TB / 2 (cm)."""

    a: float
    b: float
    quadrant_hint: QuadrantHint


@dataclass(frozen=True)
class TapEstimate:
    """A solved tap position with per-hyperbola residual diagnostics.

    Residuals evaluate each pair's hyperbola constraint at the solution (left
    hand side minus one); closed-form solutions keep them below 1e-9 for
    non-degenerate inputs, degenerate pairs report 0 by construction.
    """

    x: float
    y: float
    quadrant: str
    residual_lr: float
    residual_tb: float
    method: str


def enumerate_pairs(n: int) -> int:
    """Number of sensor pairings, n(n-1)/2, each of which yields a hyperbola."""
    if n < 2:
        raise ValueError("need at least two sensors")
    return n * (n - 1) // 2


def delta_from_tdoa(
    obs: TdoaObservation, speed: float, half_sep: float | None = None
) -> DeltaDistance:
    """Convert a signed time difference into a signed distance difference.

    ``delta = tdoa * speed``, sign preserved. When ``half_sep`` is given the
    result is checked against the physical bound |delta| <= 2 * half_sep;
    exceeding it signals bad calibration or a corrupted onset.
    """
    if speed <= 0:
        raise ValueError("speed must be positive")
    delta = obs.tdoa * speed
    if half_sep is not None and abs(delta) > 2 * half_sep:
        raise InfeasibleObservationError(
            f"|delta| = {abs(delta):.6g} cm exceeds the 2 x {half_sep:g} cm "
            "separation of the pair"
        )
    return DeltaDistance(pair=obs.pair, delta=delta)


def distance_differences(
    tap: tuple[float, float], layout: SensorLayout
) -> tuple[float, float]:
    """Exact Euclidean forward model: (delta_LR, delta_TB) for a tap position.

    Follows the pair sign convention: second-listed sensor distance minus
    first-listed (right minus left, bottom minus top).
    """
    x, y = tap
    pos = layout.sensor_positions()
    dist = {ch: math.hypot(x - px, y - py) for ch, (px, py) in pos.items()}
    return (
        dist[Channel.RIGHT] - dist[Channel.LEFT],
        dist[Channel.BOTTOM] - dist[Channel.TOP],
    )


def _hyperbola_lhs(x, y, intercept, half_sep, axis: str):
    """Unvalidated hyperbola left-hand side minus one; plain arithmetic so
    symbolic values flow through unchanged."""
    along = (half_sep - intercept) ** 2
    across = 2 * half_sep * intercept - intercept**2
    if axis == "x":
        return y**2 / along - x**2 / across - 1
    return x**2 / along - y**2 / across - 1


def hyperbola_residual(
    point: tuple[float, float], intercept: float, half_sep: float, axis: str
) -> float:
    """Evaluate one pair's hyperbola equation at a point, minus one.

    ``axis`` selects the written orientation of the curve: "x" opens along the
    y direction (vertex at y = +-(half_sep - intercept)), "y" opens along the
    x direction. Zero iff the point lies on the curve. Operates on the
    intercept magnitude; orientation and signs are the caller's business.
    """
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    if intercept <= 0 or intercept >= half_sep:
        raise DegenerateHyperbolaError(
            f"intercept {intercept:g} is degenerate for half separation "
            f"{half_sep:g}; use the limiting axis form instead"
        )
    x, y = point
    return float(_hyperbola_lhs(x, y, intercept, half_sep, axis))


def resolve_quadrant(obs_lr: TdoaObservation, obs_tb: TdoaObservation) -> QuadrantHint:
    """Pick the output signs from which sensor of each pair fired first.

    Right-and-top first puts the tap in quadrant I, and so on around the
    cross; a tie on a pair pins the tap to that pair's axis, two ties pin it
    to the origin.
    """
    if obs_lr.pair is not SensorPair.LEFT_RIGHT:
        raise ValueError("obs_lr must come from the left/right pair")
    if obs_tb.pair is not SensorPair.TOP_BOTTOM:
        raise ValueError("obs_tb must come from the top/bottom pair")
    if obs_lr.first_arrival is Channel.RIGHT:
        sign_x = 1
    elif obs_lr.first_arrival is Channel.LEFT:
        sign_x = -1
    else:
        sign_x = 0
    if obs_tb.first_arrival is Channel.TOP:
        sign_y = 1
    elif obs_tb.first_arrival is Channel.BOTTOM:
        sign_y = -1
    else:
        sign_y = 0
    return QuadrantHint(sign_x=sign_x, sign_y=sign_y)


def hint_from_deltas(delta_lr: float, delta_tb: float) -> QuadrantHint:
    """Quadrant hint implied by signed deltas; agrees with resolve_quadrant.

    delta_LR < 0 means the right sensor was closer (tap on +x); delta_TB > 0
    means the top sensor was closer (tap on +y).
    """
    sign_x = 1 if delta_lr < 0 else (-1 if delta_lr > 0 else 0)
    sign_y = 1 if delta_tb > 0 else (-1 if delta_tb < 0 else 0)
    return QuadrantHint(sign_x=sign_x, sign_y=sign_y)


def intercepts_from_deltas(
    delta_lr: DeltaDistance, delta_tb: DeltaDistance, layout: SensorLayout
) -> HyperbolaIntercepts:
    """Halve the deltas into axis intercepts, with feasibility checks."""
    if delta_lr.pair is not SensorPair.LEFT_RIGHT:
        raise ValueError("delta_lr must come from the left/right pair")
    if delta_tb.pair is not SensorPair.TOP_BOTTOM:
        raise ValueError("delta_tb must come from the top/bottom pair")
    a = delta_lr.delta / 2
    b = delta_tb.delta / 2
    if abs(a) >= layout.half_sep_x:
        raise InfeasibleObservationError(
            f"|a| = {abs(a):.6g} cm reaches the half separation "
            f"{layout.half_sep_x:g} cm"
        )
    if abs(b) >= layout.half_sep_y:
        raise InfeasibleObservationError(
            f"|b| = {abs(b):.6g} cm reaches the half separation "
            f"{layout.half_sep_y:g} cm"
        )
    return HyperbolaIntercepts(a=a, b=b, quadrant_hint=hint_from_deltas(delta_lr.delta, delta_tb.delta))


def _clamped_sqrt(value: float, scale: float) -> float:
    """Square root with a small-negative clamp; beyond tolerance it is a
    genuine non-intersection."""
    if value < 0:
        if value < -NEGATIVE_RADICAND_REL_TOL * scale:
            raise NoIntersectionError(
                "negative radicand beyond tolerance: the observations are "
                "mutually inconsistent"
            )
        return 0.0
    return math.sqrt(value)


def solve_closed_form(
    intercepts: HyperbolaIntercepts, layout: SensorLayout
) -> TapEstimate:
    """Intersect the two hyperbolas in closed form.

    With a = |intercepts.a|, b = |intercepts.b| and half separations sx, sy:

        x^2 = a^2 (sy^2 - b^2)(sx^2 - a^2 + b^2) / D
        y^2 = b^2 (sx^2 - a^2)(sy^2 - b^2 + a^2) / D
        D   = sx^2 sy^2 - sx^2 b^2 - sy^2 a^2

    All four sign combinations satisfy both equations; the quadrant hint picks
    exactly one. Degenerate intercepts short-circuit to the axis or origin
    limiting cases, and D <= 0 beyond rounding raises a typed
    non-intersection error instead of producing non-finite output.
    """
    sx = layout.half_sep_x
    sy = layout.half_sep_y
    a = abs(intercepts.a)
    b = abs(intercepts.b)
    if a >= sx or b >= sy:
        raise InfeasibleObservationError(
            "intercept magnitude reaches the half separation; the hyperbola "
            "degenerates to a ray along the axis"
        )
    hint = intercepts.quadrant_hint
    sign_x = hint.sign_x
    sign_y = hint.sign_y

    a_degenerate = a < DEGENERATE_INTERCEPT_CM
    b_degenerate = b < DEGENERATE_INTERCEPT_CM
    if a_degenerate and b_degenerate:
        x, y = 0.0, 0.0
    elif a_degenerate:
        # The left/right locus collapses to the line x = 0; the tap sits at
        # the top/bottom hyperbola's vertex.
        x, y = 0.0, sign_y * b
    elif b_degenerate:
        x, y = sign_x * a, 0.0
    else:
        sx2, sy2, a2, b2 = sx * sx, sy * sy, a * a, b * b
        scale = sx2 * sy2
        d = scale - sx2 * b2 - sy2 * a2
        if d <= 0:
            raise NoIntersectionError(
                "the hyperbola branches do not intersect (observations place "
                "the tap at infinity or beyond); check calibration"
            )
        x = sign_x * a * _clamped_sqrt((sy2 - b2) * (sx2 - a2 + b2) / d, scale)
        y = sign_y * b * _clamped_sqrt((sx2 - a2) * (sy2 - b2 + a2) / d, scale)

    # Residuals certify the solve: each pair's constraint is the written form
    # taken at the complementary intercept (half_sep minus the vertex).
    if a_degenerate:
        residual_lr = 0.0
    else:
        residual_lr = hyperbola_residual((x, y), sx - a, sx, axis="y")
    if b_degenerate:
        residual_tb = 0.0
    else:
        residual_tb = hyperbola_residual((x, y), sy - b, sy, axis="x")
    return TapEstimate(
        x=x,
        y=y,
        quadrant=hint.label,
        residual_lr=residual_lr,
        residual_tb=residual_tb,
        method="closed_form",
    )


def solve_from_deltas(
    delta_lr: DeltaDistance, delta_tb: DeltaDistance, layout: SensorLayout
) -> TapEstimate:
    """Closed-form solve straight from signed deltas."""
    return solve_closed_form(intercepts_from_deltas(delta_lr, delta_tb, layout), layout)


def locate_tap(
    obs_lr: TdoaObservation,
    obs_tb: TdoaObservation,
    layout: SensorLayout,
    speed_x: float,
    speed_y: float,
    *,
    correct_anisotropy: bool = True,
) -> TapEstimate:
    """Solve a tap position from one observation per pair.

    With ``correct_anisotropy`` the intersection is performed in the
    speed-normalized frame (y and everything on the y axis scaled by
    speed_x / speed_y), which inverts anisotropic straight-ray propagation
    exactly and reduces to the plain solve when the speeds are equal. Without
    it, each pair's time difference is converted with its own speed and the
    hyperbolas are intersected in physical coordinates, which carries a
    systematic off-axis bias on anisotropic surfaces. Residuals always certify
    the solve in the frame where it ran.
    """
    d_lr = delta_from_tdoa(obs_lr, speed_x, half_sep=layout.half_sep_x)
    d_tb = delta_from_tdoa(obs_tb, speed_y, half_sep=layout.half_sep_y)
    if not correct_anisotropy or speed_x == speed_y:
        return solve_from_deltas(d_lr, d_tb, layout)
    ratio = speed_x / speed_y
    scaled_layout = SensorLayout(layout.half_sep_x, layout.half_sep_y * ratio)
    scaled_tb = DeltaDistance(SensorPair.TOP_BOTTOM, d_tb.delta * ratio)
    scaled = solve_from_deltas(d_lr, scaled_tb, scaled_layout)
    return TapEstimate(
        x=scaled.x,
        y=scaled.y / ratio,
        quadrant=scaled.quadrant,
        residual_lr=scaled.residual_lr,
        residual_tb=scaled.residual_tb,
        method="closed_form",
    )


def _delta_residuals(
    gx: np.ndarray,
    gy: np.ndarray,
    delta_lr: float,
    delta_tb: float,
    layout: SensorLayout,
) -> np.ndarray:
    """Sum of squared distance-difference residuals at broadcast coordinates.

    Plain sqrt of squared sums: coordinates here are tens of centimeters, so
    the overflow protection of hypot buys nothing and costs a lot.
    """
    gx2 = gx * gx
    gy2 = gy * gy
    d_left = np.sqrt(gx2 + 2 * layout.half_sep_x * gx + layout.half_sep_x**2 + gy2)
    d_right = np.sqrt(gx2 - 2 * layout.half_sep_x * gx + layout.half_sep_x**2 + gy2)
    d_top = np.sqrt(gx2 + gy2 - 2 * layout.half_sep_y * gy + layout.half_sep_y**2)
    d_bottom = np.sqrt(gx2 + gy2 + 2 * layout.half_sep_y * gy + layout.half_sep_y**2)
    return ((d_right - d_left) - delta_lr) ** 2 + ((d_bottom - d_top) - delta_tb) ** 2


def oracle_solve(
    delta_lr: DeltaDistance,
    delta_tb: DeltaDistance,
    layout: SensorLayout,
    search_box: float | tuple[float, float, float, float] = 40.0,
    resolution: float = 1.0,
) -> TapEstimate:
    """Brute-force verification solver, independent of the closed form.

    Exhaustive grid search over the box minimizing the sum of squared
    distance-difference residuals, then one local refinement pass at
    resolution / 100. The refinement windows cover the best coarse cells
    rather than only the argmin, because far-exterior taps turn the objective
    into a canyon of near-ties along the asymptote. Signed deltas carry the
    branch information, so no quadrant hint is needed.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if isinstance(search_box, (int, float)):
        box = (-float(search_box), float(search_box), -float(search_box), float(search_box))
    else:
        box = tuple(float(v) for v in search_box)
    x_min, x_max, y_min, y_max = box
    if x_min >= x_max or y_min >= y_max:
        raise ValueError("search box is empty")

    xs = np.arange(x_min, x_max + resolution / 2, resolution)
    ys = np.arange(y_min, y_max + resolution / 2, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    objective = _delta_residuals(gx, gy, delta_lr.delta, delta_tb.delta, layout)
    flat = objective.ravel()
    n_candidates = min(ORACLE_CANDIDATE_CELLS, flat.size)
    candidates = np.sort(np.argpartition(flat, n_candidates - 1)[:n_candidates])
    best_coarse = float(flat[candidates].min())
    cutoff = best_coarse * ORACLE_CANDIDATE_FACTOR + 1e-15
    candidates = candidates[flat[candidates] <= cutoff]
    ci, cj = np.unravel_index(candidates, objective.shape)

    # One batched refinement pass over all candidate windows. The true
    # minimum lies within half a cell of its nearest coarse sample, so a
    # window of 0.6 cells around each candidate is guaranteed coverage.
    fine = resolution / 100
    half_window = 0.6 * resolution
    offsets = np.arange(-half_window, half_window + fine / 2, fine)
    window_x = xs[ci][:, None] + offsets[None, :]  # (K, W)
    window_y = ys[cj][:, None] + offsets[None, :]
    refined = _delta_residuals(
        window_x[:, :, None], window_y[:, None, :], delta_lr.delta, delta_tb.delta, layout
    )
    k, fi, fj = np.unravel_index(int(np.argmin(refined)), refined.shape)
    x = float(window_x[k, fi])
    y = float(window_y[k, fj])
    if (
        x < x_min + resolution
        or x > x_max - resolution
        or y < y_min + resolution
        or y > y_max - resolution
    ):
        raise SearchBoxTooSmallError(
            f"minimum at ({x:.3g}, {y:.3g}) presses against the search box "
            "boundary; enlarge the box"
        )

    sx, sy = layout.half_sep_x, layout.half_sep_y
    a = abs(delta_lr.delta) / 2
    b = abs(delta_tb.delta) / 2
    residual_lr = (
        0.0
        if a < DEGENERATE_INTERCEPT_CM or a >= sx
        else hyperbola_residual((x, y), sx - a, sx, axis="y")
    )
    residual_tb = (
        0.0
        if b < DEGENERATE_INTERCEPT_CM or b >= sy
        else hyperbola_residual((x, y), sy - b, sy, axis="x")
    )
    return TapEstimate(
        x=x,
        y=y,
        quadrant=hint_from_deltas(delta_lr.delta, delta_tb.delta).label,
        residual_lr=residual_lr,
        residual_tb=residual_tb,
        method="oracle",
    )


def write_estimates_csv(
    estimates: Sequence[TapEstimate],
    path: str | Path,
    tap_ids: Sequence[int] | None = None,
) -> None:
    """Export estimates: tap_id, x_cm, y_cm, quadrant, residual_lr,
    residual_tb, method."""
    if tap_ids is None:
        tap_ids = list(range(len(estimates)))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["tap_id", "x_cm", "y_cm", "quadrant", "residual_lr", "residual_tb", "method"]
        )
        for tap_id, est in zip(tap_ids, estimates):
            writer.writerow(
                [
                    tap_id,
                    f"{est.x:.9g}",
                    f"{est.y:.9g}",
                    est.quadrant,
                    f"{est.residual_lr:.9g}",
                    f"{est.residual_tb:.9g}",
                    est.method,
                ]
            )

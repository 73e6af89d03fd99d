"""Forward model of taps on an anisotropic surface, down to sample streams.

This is the verification stand-in for the physical sensor cross: a tap at a
known position is turned into per-device two-channel int16 streams that the
detection pipeline can consume, together with a ground-truth log of exactly
where each impulse was injected.

Propagation model: travel time is the elliptical slowness metric
sqrt((dx / speed_x)^2 + (dy / speed_y)^2), the simplest metric consistent
with two independent per-axis speed calibrations; it degenerates to Euclidean
distance over speed when the speeds are equal. Whether a real surface's
anisotropy behaves like a metric or like two unrelated 1D calibrations is an
open modeling question, so the choice is deliberately explicit here.

Each device (sensor pair) keeps its own capture clock: a per-device start
offset shifts all of that device's impulse indices without touching the other
device, which is how the absence of cross-device synchronization stays
testable. Offsets are aligned to whole samples, as real capture devices start
on their ADC clock grid, so within-device time differences are exactly
invariant under offset changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .geometry import SensorLayout
from .signal_pipeline import (
    INT16_MAX,
    Channel,
    DetectorConfig,
    SampleChunk,
    SensorPair,
    pair_of,
)

CHANNEL_ORDER = (Channel.LEFT, Channel.RIGHT, Channel.TOP, Channel.BOTTOM)

DEFAULT_SPEED_X = 45014.0
DEFAULT_SPEED_Y = 37259.0

# How many decay constants past the peak the rendered impulse is kept.
DECAY_TAIL_FACTOR = 6.0


@dataclass(frozen=True)
class SurfaceModel:
    """Propagation speeds plus the knobs of the rendered tap waveform.

    The default values are the noisy profile: onset jitter of two samples,
    mild distance attenuation and a low noise floor. ``speed_perturbation``,
    when set, maps a tap position to per-axis speed scale factors; it exists
    for sensitivity studies of locally non-uniform surfaces and is off by
    default.
    """

    speed_x: float = DEFAULT_SPEED_X
    speed_y: float = DEFAULT_SPEED_Y
    noise_stddev: float = 60.0
    peak_amplitude: int = 12000
    attenuation_per_cm: float = 0.015
    rise_samples: int = 8
    decay_constant: float = 1200.0
    onset_jitter_stddev: float = 2.0
    speed_perturbation: Callable[[float, float], tuple[float, float]] | None = None

    def __post_init__(self) -> None:
        if self.speed_x <= 0 or self.speed_y <= 0:
            raise ValueError("speeds must be positive")
        if not (0 < self.peak_amplitude <= INT16_MAX):
            raise ValueError("peak_amplitude must be in (0, 32767]")
        if not (0 <= self.attenuation_per_cm < 1):
            raise ValueError("attenuation_per_cm must be in [0, 1)")
        if self.rise_samples < 1:
            raise ValueError("rise_samples must be >= 1")
        if self.decay_constant <= 0:
            raise ValueError("decay_constant must be positive")
        if self.noise_stddev < 0 or self.onset_jitter_stddev < 0:
            raise ValueError("noise parameters must be non-negative")

    def noise_off(self) -> "SurfaceModel":
        """The same surface with noise, jitter and attenuation disabled."""
        return replace(
            self, noise_stddev=0.0, onset_jitter_stddev=0.0, attenuation_per_cm=0.0
        )


def arrival_times(
    tap: tuple[float, float], layout: SensorLayout, surface: SurfaceModel
) -> dict[Channel, float]:
    """Travel time from the tap to each sensor under the slowness metric."""
    x, y = tap
    vx, vy = surface.speed_x, surface.speed_y
    if surface.speed_perturbation is not None:
        fx, fy = surface.speed_perturbation(x, y)
        vx, vy = vx * fx, vy * fy
    times = {}
    for channel, (px, py) in layout.sensor_positions().items():
        times[channel] = math.hypot((x - px) / vx, (y - py) / vy)
    return times


@dataclass(frozen=True)
class SimulatedTap:
    """One tap with everything needed to render it deterministically."""

    true_position: tuple[float, float]
    arrival_times: dict[Channel, float]
    device_start_offsets: dict[SensorPair, float]
    emit_time: float = 0.0


def make_tap(
    position: tuple[float, float],
    layout: SensorLayout,
    surface: SurfaceModel,
    rng: np.random.Generator,
    *,
    emit_time: float = 0.0,
    device_offset_max_s: float = 0.02,
    sample_rate: int = 192000,
) -> SimulatedTap:
    """Build a tap with independently drawn per-device start offsets.

    Offsets are rounded to whole samples of ``sample_rate``; devices start
    capturing on their own clock grid.
    """
    offsets = {}
    for pair in (SensorPair.LEFT_RIGHT, SensorPair.TOP_BOTTOM):
        raw = rng.uniform(0.0, device_offset_max_s)
        offsets[pair] = round(raw * sample_rate) / sample_rate
    return SimulatedTap(
        true_position=(float(position[0]), float(position[1])),
        arrival_times=arrival_times(position, layout, surface),
        device_start_offsets=offsets,
        emit_time=emit_time,
    )


@dataclass(frozen=True)
class InjectedImpulse:
    """Ground truth for one rendered impulse."""

    tap_id: int
    x: float
    y: float
    channel: Channel
    injected_sample_index: int
    peak: float


@dataclass
class SynthesizedCapture:
    """Rendered per-device streams plus the exact injected ground truth."""

    channel_samples: dict[Channel, np.ndarray]
    events: list[InjectedImpulse]
    warnings: list[str]
    sample_rate: int
    chunk_size: int

    def chunk_stream(self, pair: SensorPair) -> list[tuple[SampleChunk, SampleChunk]]:
        """The device's stream as in-order chunk pairs for the detector."""
        first_ch, second_ch = pair.channels
        first = self.channel_samples[first_ch]
        second = self.channel_samples[second_ch]
        chunks = []
        for chunk_index, start in enumerate(range(0, len(first), self.chunk_size)):
            stop = start + self.chunk_size
            chunks.append(
                (
                    SampleChunk(first_ch, first[start:stop], chunk_index, self.sample_rate),
                    SampleChunk(second_ch, second[start:stop], chunk_index, self.sample_rate),
                )
            )
        return chunks


def _sensor_distance(position, channel, layout) -> float:
    px, py = layout.sensor_positions()[channel]
    return math.hypot(position[0] - px, position[1] - py)


def synthesize(
    taps: SimulatedTap | Sequence[SimulatedTap],
    surface: SurfaceModel,
    detector_cfg: DetectorConfig,
    rng: np.random.Generator,
    layout: SensorLayout | None = None,
) -> SynthesizedCapture:
    """Render taps into noisy two-channel streams, one stream per device.

    Each impulse starts at round((emit_time + arrival + device offset) * rate
    + jitter), rises linearly over ``rise_samples`` to the attenuated peak,
    then decays exponentially. A fixed rng seed reproduces the streams
    bit-exactly. An impulse whose attenuated peak falls below the detection
    threshold is still rendered but flagged in the warnings: such taps are
    deliberately missable.
    """
    if isinstance(taps, SimulatedTap):
        taps = [taps]
    if not taps:
        raise ValueError("need at least one tap")
    if layout is None:
        layout = SensorLayout()
    if surface.peak_amplitude <= detector_cfg.detect_threshold:
        raise ValueError("peak_amplitude must exceed the detection threshold")
    rate = detector_cfg.sample_rate
    chunk_size = detector_cfg.chunk_size
    rise = surface.rise_samples
    tail = int(surface.decay_constant * DECAY_TAIL_FACTOR)

    # Jitter draws come first, in (tap, channel) order, so the injected
    # indices are known before any noise is generated.
    planned: list[tuple[int, SimulatedTap, Channel, int, float]] = []
    warnings: list[str] = []
    last_index = 0
    for tap_id, tap in enumerate(taps):
        for channel in CHANNEL_ORDER:
            offset = tap.device_start_offsets[pair_of(channel)]
            exact = (tap.emit_time + offset + tap.arrival_times[channel]) * rate
            if surface.onset_jitter_stddev > 0:
                exact += rng.normal(0.0, surface.onset_jitter_stddev)
            index = int(round(exact))
            if index < 0:
                raise ValueError("impulse starts before the capture does")
            distance = _sensor_distance(tap.true_position, channel, layout)
            peak = surface.peak_amplitude * (1.0 - surface.attenuation_per_cm) ** distance
            if peak < detector_cfg.detect_threshold:
                warnings.append(
                    f"tap {tap_id} at {tap.true_position}: peak {peak:.0f} on "
                    f"{channel.value} is below the detection threshold "
                    f"{detector_cfg.detect_threshold}; the tap will be missed"
                )
            planned.append((tap_id, tap, channel, index, peak))
            last_index = max(last_index, index)

    n_samples = ((last_index + rise + tail) // chunk_size + 2) * chunk_size
    channel_samples: dict[Channel, np.ndarray] = {}
    events: list[InjectedImpulse] = []
    for channel in CHANNEL_ORDER:
        if surface.noise_stddev > 0:
            stream = rng.normal(0.0, surface.noise_stddev, size=n_samples)
        else:
            stream = np.zeros(n_samples)
        for tap_id, tap, ch, index, peak in planned:
            if ch is not channel:
                continue
            ramp = peak * np.arange(1, rise + 1) / rise
            decay = peak * np.exp(-np.arange(1, tail + 1) / surface.decay_constant)
            impulse = np.concatenate([ramp, decay])
            stop = min(index + len(impulse), n_samples)
            stream[index:stop] += impulse[: stop - index]
            events.append(
                InjectedImpulse(
                    tap_id=tap_id,
                    x=tap.true_position[0],
                    y=tap.true_position[1],
                    channel=channel,
                    injected_sample_index=index,
                    peak=peak,
                )
            )
        channel_samples[channel] = np.clip(stream, -32768, INT16_MAX).astype(np.int16)
    return SynthesizedCapture(
        channel_samples=channel_samples,
        events=events,
        warnings=warnings,
        sample_rate=rate,
        chunk_size=chunk_size,
    )


def export_pcm(
    first_channel: np.ndarray, second_channel: np.ndarray, path: str | Path
) -> None:
    """Write one device's two channels as interleaved s16le, the format
    ``ingest_pcm_file`` reads back bit-exactly."""
    first = np.asarray(first_channel, dtype="<i2")
    second = np.asarray(second_channel, dtype="<i2")
    if first.shape != second.shape:
        raise ValueError("channels differ in length")
    interleaved = np.empty(first.size * 2, dtype="<i2")
    interleaved[0::2] = first
    interleaved[1::2] = second
    Path(path).write_bytes(interleaved.tobytes())


def export_capture(capture: SynthesizedCapture, directory: str | Path) -> dict[SensorPair, Path]:
    """Write both devices' PCM files into a directory; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for pair in (SensorPair.LEFT_RIGHT, SensorPair.TOP_BOTTOM):
        first_ch, second_ch = pair.channels
        path = directory / f"{pair.value}.pcm"
        export_pcm(capture.channel_samples[first_ch], capture.channel_samples[second_ch], path)
        paths[pair] = path
    return paths


def write_event_log_csv(events: Iterable[InjectedImpulse], path: str | Path) -> None:
    """Ground-truth log: tap_id, x_cm, y_cm, sensor, injected_sample_index."""
    import csv

    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["tap_id", "x_cm", "y_cm", "sensor", "injected_sample_index"])
        for event in events:
            writer.writerow(
                [
                    event.tap_id,
                    f"{event.x:.9g}",
                    f"{event.y:.9g}",
                    event.channel.value,
                    event.injected_sample_index,
                ]
            )

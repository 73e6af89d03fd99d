"""Chunked two-channel PCM streams to signed per-pair onset time differences.

Each capture device digitizes one sensor pair (left/right or top/bottom)
against a single shared sample clock, so sample indices are only ever compared
within a pair. Nothing in this module relates the two devices to each other:
the detector state for one pair is independent of the other, and interleaving
the two streams through one driver produces the same output as running them
back to back.

Sign convention, relied on by every downstream module: a pair lists its
channels in a fixed order (left before right, top before bottom), and an
observation's ``tdoa`` is the second-listed onset time minus the first-listed
one. Positive ``tdoa`` therefore means the first-listed sensor heard the tap
first.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

INT16_MAX = 32767
ALLOWED_SAMPLE_RATES = (44100, 48000, 96000, 192000)
DEFAULT_CHUNK_SIZE = 8192
DEFAULT_SAMPLE_RATE = 192000
DEFAULT_DETECT_THRESHOLD = 1000
DEFAULT_ONSET_THRESHOLD = 500
DEFAULT_DEBOUNCE_CHUNKS = 5

# A tap counts as "the same event" on both channels of a pair when the two
# onsets land in the same chunk or adjacent chunks.
PAIRING_WINDOW_CHUNKS = 1


class Channel(Enum):
    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    BOTTOM = "bottom"


class SensorPair(Enum):
    LEFT_RIGHT = "left_right"
    TOP_BOTTOM = "top_bottom"

    @property
    def channels(self) -> tuple[Channel, Channel]:
        if self is SensorPair.LEFT_RIGHT:
            return (Channel.LEFT, Channel.RIGHT)
        return (Channel.TOP, Channel.BOTTOM)


def pair_of(channel: Channel) -> SensorPair:
    if channel in (Channel.LEFT, Channel.RIGHT):
        return SensorPair.LEFT_RIGHT
    return SensorPair.TOP_BOTTOM


class PcmFormatError(ValueError):
    """Raw PCM input is malformed; ``byte_offset`` points at the bad tail."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class StreamIntegrityError(RuntimeError):
    """Chunks arrived out of order or with mismatched indices."""


class CrossDevicePairingError(ValueError):
    """Attempted to combine onsets captured by different devices."""


class OnsetConsistencyError(RuntimeError):
    """Onset refinement contradicted the coarse detection that triggered it."""


@dataclass
class SampleChunk:
    """One fixed-length block of signed 16-bit amplitudes from one channel."""

    channel: Channel
    samples: np.ndarray
    chunk_index: int
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples)
        if samples.dtype != np.int16:
            if samples.size and (samples.min() < -32768 or samples.max() > INT16_MAX):
                raise ValueError("samples exceed the signed 16-bit range")
            samples = samples.astype(np.int16)
        self.samples = samples
        if self.chunk_index < 0:
            raise ValueError("chunk_index must be non-negative")
        if self.sample_rate not in ALLOWED_SAMPLE_RATES:
            raise ValueError(f"unsupported sample rate {self.sample_rate}")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class OnsetEvent:
    """A detected onset, located on its device's sample clock."""

    channel: Channel
    global_sample_index: int
    sample_rate: int

    @property
    def onset_time(self) -> float:
        return self.global_sample_index / self.sample_rate

    @property
    def pair(self) -> SensorPair:
        return pair_of(self.channel)


@dataclass(frozen=True)
class TdoaObservation:
    """Signed time difference for one sensor pair.

    ``tdoa`` is (second-listed onset time) - (first-listed onset time), an
    exact integer multiple of the sample period. ``first_arrival`` is the
    channel that fired first, or ``None`` when the onsets tie; its value is
    always sign-consistent with ``tdoa``. The optional sample indices record
    where each channel's onset was located (in pair listing order), for export
    and diagnostics.
    """

    pair: SensorPair
    tdoa: float
    first_arrival: Channel | None
    first_sample_index: int | None = None
    second_sample_index: int | None = None

    def __post_init__(self) -> None:
        first_listed, second_listed = self.pair.channels
        if self.tdoa > 0 and self.first_arrival is not first_listed:
            raise ValueError("positive tdoa requires the first-listed channel first")
        if self.tdoa < 0 and self.first_arrival is not second_listed:
            raise ValueError("negative tdoa requires the second-listed channel first")
        if self.tdoa == 0 and self.first_arrival is not None:
            raise ValueError("zero tdoa requires an indeterminate first arrival")


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds and stream geometry for the tap detector.

    ``detect_threshold`` decides that a tap happened; ``onset_threshold`` is
    the lower bar used to locate where the impulse actually starts. Keeping
    both explicit makes the onset-location bias a tunable instead of a
    hard-coded pair of constants.
    """

    detect_threshold: int = DEFAULT_DETECT_THRESHOLD
    onset_threshold: int = DEFAULT_ONSET_THRESHOLD
    debounce_chunks: int = DEFAULT_DEBOUNCE_CHUNKS
    chunk_size: int = DEFAULT_CHUNK_SIZE
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self) -> None:
        if not (0 < self.detect_threshold <= INT16_MAX):
            raise ValueError("detect_threshold must be in (0, 32767]")
        if not (0 < self.onset_threshold <= self.detect_threshold):
            raise ValueError("onset_threshold must be in (0, detect_threshold]")
        if self.debounce_chunks < 0:
            raise ValueError("debounce_chunks must be >= 0")
        if self.chunk_size <= 0:
            raise ValueError("chunk_size must be positive")
        if self.sample_rate not in ALLOWED_SAMPLE_RATES:
            raise ValueError(f"unsupported sample rate {self.sample_rate}")


def detect_onset(chunk: SampleChunk, threshold: int) -> int | None:
    """Return the first in-chunk index whose |amplitude| crosses ``threshold``.

    Pure function; absence of a crossing is a valid outcome, not an error.
    """
    if len(chunk) == 0:
        raise ValueError("chunk is empty")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    # int32 to survive abs(-32768), which wraps in int16.
    hits = np.abs(chunk.samples.astype(np.int32)) >= threshold
    if not hits.any():
        return None
    return int(np.argmax(hits))


def refine_onset(chunk: SampleChunk, coarse_index: int, onset_threshold: int) -> int:
    """Locate the impulse start: first crossing of the lower onset threshold.

    Requires that detection already succeeded on this chunk at a threshold at
    least as high as ``onset_threshold``; the refined index can then never
    exceed ``coarse_index``.
    """
    refined = detect_onset(chunk, onset_threshold)
    if refined is None or refined > coarse_index:
        raise OnsetConsistencyError(
            "no onset at or before the detection index; onset_threshold must "
            "not exceed the detection threshold"
        )
    return refined


def pair_tdoa(a: OnsetEvent, b: OnsetEvent) -> TdoaObservation:
    """Combine the two channels' onsets of one tap into a signed observation.

    Argument order does not matter: the difference is always taken in the
    pair's listing order, and the time difference is computed from the integer
    sample indices so its magnitude is exactly |index difference| / rate.
    """
    if a.channel is b.channel:
        raise ValueError("need onsets from two different channels")
    if a.pair is not b.pair:
        raise CrossDevicePairingError(
            f"cannot pair {a.channel.value} with {b.channel.value}: the devices "
            "share no clock"
        )
    if a.sample_rate != b.sample_rate:
        raise CrossDevicePairingError("events were sampled at different rates")
    pair = a.pair
    first_listed, second_listed = pair.channels
    events = {a.channel: a, b.channel: b}
    e1, e2 = events[first_listed], events[second_listed]
    delta_samples = e2.global_sample_index - e1.global_sample_index
    if delta_samples > 0:
        first_arrival: Channel | None = first_listed
    elif delta_samples < 0:
        first_arrival = second_listed
    else:
        first_arrival = None
    return TdoaObservation(
        pair=pair,
        tdoa=delta_samples / a.sample_rate,
        first_arrival=first_arrival,
        first_sample_index=e1.global_sample_index,
        second_sample_index=e2.global_sample_index,
    )


@dataclass
class _PendingOnset:
    chunk_index: int
    global_sample_index: int


class PairDetector:
    """Incremental tap detector for one device's chunk-pair stream.

    Feed chunk pairs in order; each call returns the observations completed by
    that chunk (at most one). A tap is emitted only when both channels crossed
    the detection threshold within the pairing window; a single-channel hit is
    discarded once the window lapses. After an emission, detection is
    suppressed for ``debounce_chunks`` chunks so one physical tap that rings
    across chunk boundaries cannot emit twice.
    """

    def __init__(self, pair: SensorPair, config: DetectorConfig):
        self.pair = pair
        self.config = config
        self._pending: dict[Channel, _PendingOnset] = {}
        self._debounce_remaining = 0
        self._next_chunk_index: int | None = None

    def feed(self, chunk_a: SampleChunk, chunk_b: SampleChunk) -> list[TdoaObservation]:
        chunks = {chunk_a.channel: chunk_a, chunk_b.channel: chunk_b}
        if set(chunks) != set(self.pair.channels):
            raise ValueError(f"chunk pair does not match {self.pair.value}")
        if chunk_a.chunk_index != chunk_b.chunk_index:
            raise StreamIntegrityError(
                f"channel chunks disagree on index: {chunk_a.chunk_index} vs "
                f"{chunk_b.chunk_index}"
            )
        if chunk_a.sample_rate != self.config.sample_rate or (
            chunk_b.sample_rate != self.config.sample_rate
        ):
            raise StreamIntegrityError("chunk sample rate differs from the config")
        index = chunk_a.chunk_index
        if self._next_chunk_index is not None and index != self._next_chunk_index:
            raise StreamIntegrityError(
                f"expected chunk {self._next_chunk_index}, got {index}"
            )
        self._next_chunk_index = index + 1

        if self._debounce_remaining > 0:
            self._debounce_remaining -= 1
            self._pending.clear()
            return []

        # Expire single-channel hits whose pairing window has lapsed.
        for channel in list(self._pending):
            if index - self._pending[channel].chunk_index > PAIRING_WINDOW_CHUNKS:
                del self._pending[channel]

        for channel in self.pair.channels:
            chunk = chunks[channel]
            if len(chunk) == 0 or channel in self._pending:
                continue
            coarse = detect_onset(chunk, self.config.detect_threshold)
            if coarse is None:
                continue
            refined = refine_onset(chunk, coarse, self.config.onset_threshold)
            self._pending[channel] = _PendingOnset(
                chunk_index=index,
                global_sample_index=index * self.config.chunk_size + refined,
            )

        if len(self._pending) < 2:
            return []
        first_listed, second_listed = self.pair.channels
        e1 = OnsetEvent(
            first_listed,
            self._pending[first_listed].global_sample_index,
            self.config.sample_rate,
        )
        e2 = OnsetEvent(
            second_listed,
            self._pending[second_listed].global_sample_index,
            self.config.sample_rate,
        )
        self._pending.clear()
        self._debounce_remaining = self.config.debounce_chunks
        return [pair_tdoa(e1, e2)]


def run_detector(
    chunks: Iterable[tuple[SampleChunk, SampleChunk]], config: DetectorConfig
) -> list[TdoaObservation]:
    """Run the detector over an in-order stream of chunk pairs from one device."""
    detector: PairDetector | None = None
    observations: list[TdoaObservation] = []
    for chunk_a, chunk_b in chunks:
        if detector is None:
            detector = PairDetector(pair_of(chunk_a.channel), config)
        observations.extend(detector.feed(chunk_a, chunk_b))
    return observations


def ingest_pcm_file(
    path: str | Path,
    pair: SensorPair,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> Iterator[tuple[SampleChunk, SampleChunk]]:
    """De-interleave a raw 2-channel signed 16-bit little-endian file.

    Frame layout is first-channel sample then second-channel sample, repeated.
    The final chunk of a file may be short; it is processed as-is, never
    padded, so no artificial amplitude step can fabricate an onset.
    """
    data = Path(path).read_bytes()
    remainder = len(data) % 4
    if remainder:
        raise PcmFormatError(
            "file does not contain a whole number of 2-channel 16-bit frames",
            byte_offset=len(data) - remainder,
        )
    samples = np.frombuffer(data, dtype="<i2")
    first_all = samples[0::2]
    second_all = samples[1::2]
    first_ch, second_ch = pair.channels
    n_frames = len(first_all)
    for chunk_index, start in enumerate(range(0, n_frames, chunk_size)):
        stop = min(start + chunk_size, n_frames)
        yield (
            SampleChunk(first_ch, first_all[start:stop], chunk_index, sample_rate),
            SampleChunk(second_ch, second_all[start:stop], chunk_index, sample_rate),
        )


_PAIR_LABEL = {SensorPair.LEFT_RIGHT: "LeftRight", SensorPair.TOP_BOTTOM: "TopBottom"}


def write_observations_csv(
    observations: Sequence[TdoaObservation],
    path: str | Path,
    tap_ids: Sequence[int] | None = None,
) -> None:
    """Export observations with the fixed schema.

    Columns: pair, tap_id, tdoa_seconds, first_arrival, left_sample_index,
    right_sample_index. The two index columns hold the pair's channels in
    listing order, so for a top/bottom device they carry the top and bottom
    indices.
    """
    if tap_ids is None:
        tap_ids = list(range(len(observations)))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            [
                "pair",
                "tap_id",
                "tdoa_seconds",
                "first_arrival",
                "left_sample_index",
                "right_sample_index",
            ]
        )
        for tap_id, obs in zip(tap_ids, observations):
            writer.writerow(
                [
                    _PAIR_LABEL[obs.pair],
                    tap_id,
                    f"{obs.tdoa:.9g}",
                    obs.first_arrival.value if obs.first_arrival else "tie",
                    "" if obs.first_sample_index is None else obs.first_sample_index,
                    "" if obs.second_sample_index is None else obs.second_sample_index,
                ]
            )

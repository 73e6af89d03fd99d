"""Detector and stream plumbing tests."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alto.signal_pipeline import (
    Channel,
    CrossDevicePairingError,
    DetectorConfig,
    OnsetConsistencyError,
    OnsetEvent,
    PairDetector,
    PcmFormatError,
    SampleChunk,
    SensorPair,
    StreamIntegrityError,
    TdoaObservation,
    detect_onset,
    ingest_pcm_file,
    pair_of,
    pair_tdoa,
    refine_onset,
    run_detector,
    write_observations_csv,
)


def chunk(samples, channel=Channel.LEFT, index=0, rate=192000):
    return SampleChunk(channel, np.asarray(samples, dtype=np.int16), index, rate)


class TestDetectOnset:
    def test_all_zero_chunk_has_no_onset(self):
        assert detect_onset(chunk([0] * 64), 1000) is None

    def test_absolute_value_rule_finds_first_crossing(self):
        assert detect_onset(chunk([0, -1200, 3000, 0]), 1000) == 1

    def test_exact_threshold_counts(self):
        assert detect_onset(chunk([0, 1000]), 1000) == 1

    def test_int16_minimum_is_detected(self):
        # abs(-32768) overflows int16; the detector must not wrap it away.
        assert detect_onset(chunk([0, -32768]), 32767) == 1

    def test_empty_chunk_rejected(self):
        with pytest.raises(ValueError):
            detect_onset(chunk([]), 1000)

    def test_nonpositive_threshold_rejected(self):
        with pytest.raises(ValueError):
            detect_onset(chunk([1, 2]), 0)

    @given(
        st.lists(st.integers(min_value=-32768, max_value=32767), min_size=1, max_size=200),
        st.integers(min_value=1, max_value=32767),
    )
    def test_matches_first_crossing_oracle(self, samples, threshold):
        expected = None
        for i, value in enumerate(samples):
            if abs(value) >= threshold:
                expected = i
                break
        assert detect_onset(chunk(samples), threshold) == expected


class TestRefineOnset:
    def test_first_crossing_of_lower_threshold(self):
        samples = [0] * 30 + [600, 700, 800, 900, 1100, 2000]
        c = chunk(samples)
        coarse = detect_onset(c, 1000)
        assert coarse == 34
        assert refine_onset(c, coarse, 500) == 30

    def test_equal_thresholds_reproduce_detection(self):
        samples = [0] * 10 + [1500]
        c = chunk(samples)
        coarse = detect_onset(c, 1000)
        assert refine_onset(c, coarse, 1000) == coarse

    def test_missing_low_crossing_is_inconsistent(self):
        c = chunk([0, 2000])
        with pytest.raises(OnsetConsistencyError):
            # onset threshold above the detect threshold breaks the contract
            refine_onset(c, 0, 3000)

    def test_linear_ramp_refinement_stays_within_rise(self):
        # ramp over 8 samples to peak 4000, starting at index 100
        rise = 8
        ramp = [int(4000 * k / rise) for k in range(1, rise + 1)]
        samples = [0] * 100 + ramp + [4000] * 4
        c = chunk(samples)
        coarse = detect_onset(c, 1000)
        refined = refine_onset(c, coarse, 500)
        assert refined <= coarse
        assert coarse - refined <= rise


class TestPairTdoa:
    def test_simultaneous_onsets_tie(self):
        obs = pair_tdoa(
            OnsetEvent(Channel.LEFT, 1000, 192000),
            OnsetEvent(Channel.RIGHT, 1000, 192000),
        )
        assert obs.tdoa == 0.0
        assert obs.first_arrival is None

    def test_left_first_arithmetic(self):
        obs = pair_tdoa(
            OnsetEvent(Channel.LEFT, 1000, 192000),
            OnsetEvent(Channel.RIGHT, 1096, 192000),
        )
        assert obs.tdoa == pytest.approx(96 / 192000)
        assert obs.tdoa == pytest.approx(5.0e-4)
        assert obs.first_arrival is Channel.LEFT

    def test_argument_order_is_irrelevant(self):
        a = OnsetEvent(Channel.TOP, 500, 192000)
        b = OnsetEvent(Channel.BOTTOM, 700, 192000)
        assert pair_tdoa(a, b) == pair_tdoa(b, a)

    def test_same_channel_twice_is_usage_error(self):
        event = OnsetEvent(Channel.LEFT, 10, 192000)
        with pytest.raises(ValueError):
            pair_tdoa(event, OnsetEvent(Channel.LEFT, 20, 192000))

    def test_cross_device_pairing_is_forbidden(self):
        with pytest.raises(CrossDevicePairingError):
            pair_tdoa(
                OnsetEvent(Channel.LEFT, 10, 192000),
                OnsetEvent(Channel.TOP, 20, 192000),
            )

    def test_mismatched_rates_are_cross_device(self):
        with pytest.raises(CrossDevicePairingError):
            pair_tdoa(
                OnsetEvent(Channel.LEFT, 10, 192000),
                OnsetEvent(Channel.RIGHT, 20, 96000),
            )

    @given(
        st.integers(min_value=0, max_value=10**6),
        st.integers(min_value=0, max_value=10**6),
        st.sampled_from([44100, 48000, 96000, 192000]),
    )
    def test_time_swap_antisymmetry(self, i1, i2, rate):
        """Exchanging the two channels' onset times negates the tdoa and
        flips the first arrival."""
        obs = pair_tdoa(
            OnsetEvent(Channel.LEFT, i1, rate), OnsetEvent(Channel.RIGHT, i2, rate)
        )
        mirrored = pair_tdoa(
            OnsetEvent(Channel.LEFT, i2, rate), OnsetEvent(Channel.RIGHT, i1, rate)
        )
        assert mirrored.tdoa == -obs.tdoa
        if obs.first_arrival is None:
            assert mirrored.first_arrival is None
        else:
            assert mirrored.first_arrival is not obs.first_arrival
        # exactly the integer sample difference over the rate, bit for bit
        assert obs.tdoa == (i2 - i1) / rate

    def test_sign_consistency_enforced_on_construction(self):
        with pytest.raises(ValueError):
            TdoaObservation(SensorPair.LEFT_RIGHT, 1e-3, Channel.RIGHT)
        with pytest.raises(ValueError):
            TdoaObservation(SensorPair.LEFT_RIGHT, 0.0, Channel.LEFT)


def impulse_stream(hits, n_chunks, chunk_size=512, rate=192000, amplitude=3000):
    """Build a chunk-pair stream with impulses at (chunk, offset) per channel."""
    total = n_chunks * chunk_size
    data = {
        Channel.LEFT: np.zeros(total, dtype=np.int16),
        Channel.RIGHT: np.zeros(total, dtype=np.int16),
    }
    for channel, chunk_index, offset in hits:
        data[channel][chunk_index * chunk_size + offset] = amplitude
    stream = []
    for k in range(n_chunks):
        sl = slice(k * chunk_size, (k + 1) * chunk_size)
        stream.append(
            (
                SampleChunk(Channel.LEFT, data[Channel.LEFT][sl], k, rate),
                SampleChunk(Channel.RIGHT, data[Channel.RIGHT][sl], k, rate),
            )
        )
    return stream


class TestRunDetector:
    config = DetectorConfig(chunk_size=512, sample_rate=192000)

    def test_silent_stream_yields_nothing(self):
        assert run_detector(impulse_stream([], 4), self.config) == []

    def test_single_tap_same_chunk(self):
        stream = impulse_stream(
            [(Channel.LEFT, 1, 100), (Channel.RIGHT, 1, 140)], 8
        )
        observations = run_detector(stream, self.config)
        assert len(observations) == 1
        obs = observations[0]
        assert obs.first_arrival is Channel.LEFT
        assert obs.tdoa == pytest.approx(40 / 192000)
        assert obs.first_sample_index == 1 * 512 + 100
        assert obs.second_sample_index == 1 * 512 + 140

    def test_tap_straddling_a_chunk_boundary_pairs_up(self):
        stream = impulse_stream(
            [(Channel.LEFT, 1, 500), (Channel.RIGHT, 2, 30)], 9
        )
        observations = run_detector(stream, self.config)
        assert len(observations) == 1
        assert observations[0].tdoa == pytest.approx((2 * 512 + 30 - (512 + 500)) / 192000)

    def test_single_channel_hit_emits_nothing(self):
        stream = impulse_stream([(Channel.LEFT, 1, 100)], 8)
        assert run_detector(stream, self.config) == []

    def test_window_lapse_drops_stale_hit(self):
        # hits two chunks apart never pair
        stream = impulse_stream(
            [(Channel.LEFT, 1, 100), (Channel.RIGHT, 3, 100)], 10
        )
        assert run_detector(stream, self.config) == []

    def test_ringing_collapses_to_one_observation(self):
        # impulse crossing threshold again in the following chunks
        hits = [(Channel.LEFT, 1, 100), (Channel.RIGHT, 1, 120)]
        hits += [(Channel.LEFT, 2, 50), (Channel.RIGHT, 2, 60)]
        hits += [(Channel.LEFT, 3, 50), (Channel.RIGHT, 3, 60)]
        stream = impulse_stream(hits, 10)
        observations = run_detector(stream, self.config)
        assert len(observations) == 1

    def test_two_taps_beyond_debounce_both_emit(self):
        hits = [(Channel.LEFT, 1, 100), (Channel.RIGHT, 1, 120)]
        hits += [(Channel.LEFT, 11, 100), (Channel.RIGHT, 11, 120)]
        stream = impulse_stream(hits, 14)
        assert len(run_detector(stream, self.config)) == 2

    def test_tap_inside_debounce_window_is_suppressed(self):
        hits = [(Channel.LEFT, 1, 100), (Channel.RIGHT, 1, 120)]
        hits += [(Channel.LEFT, 4, 100), (Channel.RIGHT, 4, 120)]
        stream = impulse_stream(hits, 10)
        assert len(run_detector(stream, self.config)) == 1

    def test_out_of_order_chunks_break_integrity(self):
        stream = impulse_stream([], 4)
        reordered = [stream[0], stream[2]]
        with pytest.raises(StreamIntegrityError):
            run_detector(reordered, self.config)

    def test_mismatched_pair_indices_break_integrity(self):
        stream = impulse_stream([], 4)
        broken = [(stream[0][0], stream[1][1])]
        with pytest.raises(StreamIntegrityError):
            run_detector(broken, self.config)

    def test_interleaved_devices_match_sequential_runs(self):
        """One single-threaded driver feeding both devices alternately must
        reproduce the two independent sequential runs."""
        lr_stream = impulse_stream(
            [(Channel.LEFT, 1, 100), (Channel.RIGHT, 1, 160)], 8
        )
        tb_total = 8 * 512
        tb_data = {
            Channel.TOP: np.zeros(tb_total, dtype=np.int16),
            Channel.BOTTOM: np.zeros(tb_total, dtype=np.int16),
        }
        tb_data[Channel.TOP][2 * 512 + 40] = 3000
        tb_data[Channel.BOTTOM][2 * 512 + 90] = 3000
        tb_stream = [
            (
                SampleChunk(Channel.TOP, tb_data[Channel.TOP][k * 512 : (k + 1) * 512], k),
                SampleChunk(Channel.BOTTOM, tb_data[Channel.BOTTOM][k * 512 : (k + 1) * 512], k),
            )
            for k in range(8)
        ]
        sequential = (
            run_detector(lr_stream, self.config),
            run_detector(tb_stream, self.config),
        )
        lr_det = PairDetector(SensorPair.LEFT_RIGHT, self.config)
        tb_det = PairDetector(SensorPair.TOP_BOTTOM, self.config)
        interleaved = ([], [])
        for lr_pair, tb_pair in zip(lr_stream, tb_stream):
            interleaved[0].extend(lr_det.feed(*lr_pair))
            interleaved[1].extend(tb_det.feed(*tb_pair))
        assert interleaved[0] == sequential[0]
        assert interleaved[1] == sequential[1]


class TestIngest:
    def test_interleave_layout(self, tmp_path):
        path = tmp_path / "two.pcm"
        path.write_bytes(bytes([0x01, 0x00, 0x02, 0x00]))
        pairs = list(ingest_pcm_file(path, SensorPair.LEFT_RIGHT))
        assert len(pairs) == 1
        left, right = pairs[0]
        assert left.samples.tolist() == [1]
        assert right.samples.tolist() == [2]
        assert left.channel is Channel.LEFT and right.channel is Channel.RIGHT

    def test_empty_file_is_an_empty_stream(self, tmp_path):
        path = tmp_path / "empty.pcm"
        path.write_bytes(b"")
        assert list(ingest_pcm_file(path, SensorPair.LEFT_RIGHT)) == []

    def test_truncated_frame_reports_byte_offset(self, tmp_path):
        path = tmp_path / "bad.pcm"
        path.write_bytes(bytes(10))
        with pytest.raises(PcmFormatError) as err:
            list(ingest_pcm_file(path, SensorPair.LEFT_RIGHT))
        assert err.value.byte_offset == 8

    def test_chunking_and_final_short_chunk(self, tmp_path):
        frames = 5
        data = np.arange(frames * 2, dtype="<i2").tobytes()
        path = tmp_path / "frames.pcm"
        path.write_bytes(data)
        pairs = list(ingest_pcm_file(path, SensorPair.TOP_BOTTOM, chunk_size=2))
        assert [len(p[0]) for p in pairs] == [2, 2, 1]
        assert [p[0].chunk_index for p in pairs] == [0, 1, 2]
        assert pairs[-1][0].samples.tolist() == [8]
        assert pairs[-1][1].samples.tolist() == [9]


class TestObservationIo:
    def test_csv_schema(self, tmp_path):
        obs = TdoaObservation(
            SensorPair.LEFT_RIGHT, 5e-4, Channel.LEFT, 1000, 1096
        )
        path = tmp_path / "obs.csv"
        write_observations_csv([obs], path, tap_ids=[7])
        lines = path.read_text().splitlines()
        assert lines[0] == (
            "pair,tap_id,tdoa_seconds,first_arrival,left_sample_index,right_sample_index"
        )
        assert lines[1] == "LeftRight,7,0.0005,left,1000,1096"

    def test_tie_serializes(self, tmp_path):
        obs = TdoaObservation(SensorPair.TOP_BOTTOM, 0.0, None)
        path = tmp_path / "obs.csv"
        write_observations_csv([obs], path)
        assert path.read_text().splitlines()[1] == "TopBottom,0,0,tie,,"


def test_pair_of_channels():
    assert pair_of(Channel.LEFT) is SensorPair.LEFT_RIGHT
    assert pair_of(Channel.RIGHT) is SensorPair.LEFT_RIGHT
    assert pair_of(Channel.TOP) is SensorPair.TOP_BOTTOM
    assert pair_of(Channel.BOTTOM) is SensorPair.TOP_BOTTOM


def test_detector_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(detect_threshold=0)
    with pytest.raises(ValueError):
        DetectorConfig(onset_threshold=2000, detect_threshold=1000)
    with pytest.raises(ValueError):
        DetectorConfig(debounce_chunks=-1)
    with pytest.raises(ValueError):
        DetectorConfig(sample_rate=8000)

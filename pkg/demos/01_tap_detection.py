"""One simulated tap, end to end through the detection pipeline.

Renders a tap at a known position into the two capture devices' sample
streams, runs the chunked threshold detector on each device, and compares the
measured time differences with the ground truth the simulator logged.
"""

import numpy as np

from alto import (
    DetectorConfig,
    SensorLayout,
    SensorPair,
    SurfaceModel,
    make_tap,
    run_detector,
    synthesize,
)
from alto.surface_sim import arrival_times

layout = SensorLayout()          # sensors 26 cm from the origin on each axis
surface = SurfaceModel()         # anisotropic speeds, mild noise and jitter
config = DetectorConfig()        # detect at 1000, locate the onset at 500
rng = np.random.default_rng(2024)

tap_position = (12.0, -7.5)
print(f"tap at {tap_position} cm, sampled at {config.sample_rate} Hz, "
      f"chunks of {config.chunk_size} samples")

tap = make_tap(tap_position, layout, surface, rng, sample_rate=config.sample_rate)
capture = synthesize(tap, surface, config, rng, layout)

print("\nper-device capture clocks are unrelated:")
for pair, offset in tap.device_start_offsets.items():
    print(f"  {pair.value} device started {offset * 1e3:.3f} ms before the tap window")

truth = arrival_times(tap_position, layout, surface)
print("\ninjected impulses (ground truth from the simulator):")
for event in capture.events:
    print(f"  {event.channel.value:>6}: sample {event.injected_sample_index}, "
          f"peak {event.peak:.0f}")

print("\ndetector output, one observation per device:")
for pair in SensorPair:
    observations = run_detector(capture.chunk_stream(pair), config)
    obs = observations[0]
    first, second = pair.channels
    true_tdoa = truth[second] - truth[first]
    print(f"  {pair.value}: tdoa {obs.tdoa * 1e6:+.1f} us "
          f"(true {true_tdoa * 1e6:+.1f} us), "
          f"first arrival {obs.first_arrival.value if obs.first_arrival else 'tie'}, "
          f"onsets at samples {obs.first_sample_index} / {obs.second_sample_index}")

print("\nthe measured lag is quantized to the sample clock; at 192 kHz one "
      "sample is about 0.23 cm of travel along the fast axis")

"""Acoustic tap localization toolkit.

Taps on a hard surface are located by four contact microphones arranged as a
cross: each sensor pair shares one capture device and yields a signed onset
time difference, each time difference constrains the tap to a hyperbola
branch, and the two branches intersect at the tap. The package covers the
whole pipeline: chunked stream detection (`signal_pipeline`), the closed-form
solver with a brute-force oracle (`geometry`), per-axis speed calibration
(`calibration`), a seeded anisotropic surface simulator standing in for the
physical hardware (`surface_sim`), and reproducible experiment runners
(`harness`, `cli`).
"""

from .calibration import (
    AxisFit,
    CalibrationProfile,
    CalibrationSample,
    fit_axis,
    location_stats,
    one_d_position,
    read_profile,
    write_profile,
)
from .config import (
    DEFAULT_CONFIG,
    ExperimentSpec,
    Scenario,
    TapGrid,
    experiment_from_config,
    load_config,
    merge_config,
    scenario_from_config,
)
from .geometry import (
    DeltaDistance,
    HyperbolaIntercepts,
    QuadrantHint,
    SensorLayout,
    TapEstimate,
    delta_from_tdoa,
    distance_differences,
    enumerate_pairs,
    hyperbola_residual,
    locate_tap,
    oracle_solve,
    resolve_quadrant,
    solve_closed_form,
    solve_from_deltas,
)
from .harness import (
    RunReport,
    report_emit,
    run_accuracy_2d,
    run_calibrate,
    run_linearity_1d,
    run_sampling_sweep,
)
from .signal_pipeline import (
    Channel,
    DetectorConfig,
    OnsetEvent,
    PairDetector,
    SampleChunk,
    SensorPair,
    TdoaObservation,
    detect_onset,
    ingest_pcm_file,
    pair_tdoa,
    refine_onset,
    run_detector,
    write_observations_csv,
)
from .surface_sim import (
    SimulatedTap,
    SurfaceModel,
    arrival_times,
    export_pcm,
    make_tap,
    synthesize,
)

__version__ = "0.1.0"

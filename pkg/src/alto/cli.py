"""Command-line front end.

Verbs: ``simulate`` renders a scenario's taps to raw PCM plus a ground-truth
log, ``ingest`` runs the detector over a PCM file, ``calibrate`` fits the
per-axis speeds, ``locate`` solves a single tap from two time differences,
and ``experiment <kind>`` reproduces one of the built-in experiments end to
end. Flags override config-file keys, which override the built-in defaults.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .calibration import read_profile, write_profile
from .config import (
    experiment_from_config,
    load_config,
    merge_config,
    parse_tap_list,
    scenario_from_config,
)
from .geometry import locate_tap, write_estimates_csv
from .harness import report_emit, run_accuracy_2d, run_calibrate, run_linearity_1d, run_sampling_sweep
from .signal_pipeline import (
    SensorPair,
    TdoaObservation,
    ingest_pcm_file,
    run_detector,
    write_observations_csv,
)
from .surface_sim import export_capture, make_tap, synthesize, write_event_log_csv


def _merged_config(args) -> dict[str, str]:
    layers = []
    if args.config:
        layers.append(load_config(args.config))
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    layers.append(overrides)
    return merge_config(*layers)


def _cmd_simulate(args) -> int:
    cfg = _merged_config(args)
    scenario = scenario_from_config(cfg)
    taps_text = cfg.get("taps", "").strip()
    positions = parse_tap_list(taps_text) if taps_text else [(0.0, 0.0)]
    rng = np.random.default_rng(scenario.seed)
    taps = [
        make_tap(
            position,
            scenario.layout,
            scenario.surface,
            rng,
            emit_time=i * scenario.tap_spacing_s,
            device_offset_max_s=scenario.device_offset_max_s,
            sample_rate=scenario.detector.sample_rate,
        )
        for i, position in enumerate(positions)
    ]
    capture = synthesize(taps, scenario.surface, scenario.detector, rng, scenario.layout)
    out = Path(args.out)
    paths = export_capture(capture, out)
    write_event_log_csv(capture.events, out / "events.csv")
    for warning in capture.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    for pair, path in paths.items():
        print(f"wrote {path}")
    print(f"wrote {out / 'events.csv'}")
    return 0


def _cmd_ingest(args) -> int:
    cfg = _merged_config(args)
    scenario = scenario_from_config(cfg)
    pair = SensorPair(args.pair)
    chunks = ingest_pcm_file(
        args.pcm,
        pair,
        sample_rate=scenario.detector.sample_rate,
        chunk_size=scenario.detector.chunk_size,
    )
    observations = run_detector(chunks, scenario.detector)
    write_observations_csv(observations, args.out)
    print(f"wrote {args.out} ({len(observations)} observations)")
    return 0


def _cmd_calibrate(args) -> int:
    cfg = _merged_config(args)
    spec = experiment_from_config("calibrate", cfg)
    profile, report = run_calibrate(spec)
    write_profile(profile, args.out)
    print(f"wrote {args.out}")
    if args.report:
        report_emit(report, args.format, args.report)
        print(f"wrote {args.report}")
    for key, value in report.summary.items():
        print(f"{key} = {value}")
    for note in report.notes:
        print(f"note: {note}")
    return 0


def _tdoa_observation(pair: SensorPair, tdoa: float) -> TdoaObservation:
    first_listed, second_listed = pair.channels
    first = first_listed if tdoa > 0 else (second_listed if tdoa < 0 else None)
    return TdoaObservation(pair=pair, tdoa=tdoa, first_arrival=first)


def _cmd_locate(args) -> int:
    profile = read_profile(args.profile)
    obs_lr = _tdoa_observation(SensorPair.LEFT_RIGHT, args.tdoa_lr)
    obs_tb = _tdoa_observation(SensorPair.TOP_BOTTOM, args.tdoa_tb)
    estimate = locate_tap(
        obs_lr,
        obs_tb,
        profile.layout,
        profile.speed_x,
        profile.speed_y,
        correct_anisotropy=not args.no_anisotropy_correction,
    )
    print(
        f"x = {estimate.x:.9g} cm, y = {estimate.y:.9g} cm "
        f"(quadrant {estimate.quadrant}, residuals {estimate.residual_lr:.3g} / "
        f"{estimate.residual_tb:.3g})"
    )
    if args.out:
        write_estimates_csv([estimate], args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = _merged_config(args)
    spec = experiment_from_config(args.kind, cfg)
    if args.kind == "linearity_1d":
        report = run_linearity_1d(spec)
    elif args.kind == "sampling_sweep":
        report = run_sampling_sweep(spec)
    elif args.kind == "calibrate":
        profile, report = run_calibrate(spec)
        if args.profile_out:
            write_profile(profile, args.profile_out)
            print(f"wrote {args.profile_out}")
    else:  # accuracy_2d
        if args.profile:
            profile = read_profile(args.profile)
        else:
            calib_spec = experiment_from_config("calibrate", cfg)
            profile, _ = run_calibrate(calib_spec)
            print("no --profile given; calibrated on the fly from the scenario")
        report, estimates = run_accuracy_2d(spec, profile)
        if args.estimates_out:
            write_estimates_csv(
                [est for _, est in estimates], args.estimates_out
            )
            print(f"wrote {args.estimates_out}")
    report_emit(report, args.format, args.out)
    print(f"wrote {args.out}")
    for key, value in report.summary.items():
        print(f"{key} = {value}")
    for note in report.notes:
        print(f"note: {note}")
    print(f"runtime: {report.runtime_s:.2f} s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alto", description="Acoustic tap localization toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="scenario config file (key = value lines)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a single config key (repeatable)",
        )

    p = sub.add_parser("simulate", help="render the scenario's taps to PCM files")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("ingest", help="run the detector over a raw PCM file")
    add_common(p)
    p.add_argument("--pcm", required=True, help="interleaved s16le 2-channel file")
    p.add_argument(
        "--pair",
        choices=[pair.value for pair in SensorPair],
        default=SensorPair.LEFT_RIGHT.value,
    )
    p.add_argument("--out", required=True, help="observations CSV")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("calibrate", help="fit per-axis speeds on the scenario")
    add_common(p)
    p.add_argument("--out", required=True, help="calibration profile file")
    p.add_argument("--report", help="also write the per-location report")
    p.add_argument("--format", choices=["csv", "text"], default="csv")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("locate", help="solve one tap from two time differences")
    p.add_argument("--profile", required=True, help="calibration profile file")
    p.add_argument(
        "--tdoa-lr",
        type=float,
        required=True,
        help="signed seconds, positive when the left sensor fired first",
    )
    p.add_argument(
        "--tdoa-tb",
        type=float,
        required=True,
        help="signed seconds, positive when the top sensor fired first",
    )
    p.add_argument("--no-anisotropy-correction", action="store_true")
    p.add_argument("--out", help="optional estimate CSV")
    p.set_defaults(func=_cmd_locate)

    p = sub.add_parser("experiment", help="run a built-in experiment end to end")
    p.add_argument(
        "kind",
        choices=["linearity_1d", "sampling_sweep", "calibrate", "accuracy_2d"],
    )
    add_common(p)
    p.add_argument("--out", required=True, help="report file")
    p.add_argument("--format", choices=["csv", "text"], default="csv")
    p.add_argument("--profile", help="calibration profile for accuracy_2d")
    p.add_argument("--profile-out", help="write the fitted profile (calibrate kind)")
    p.add_argument("--estimates-out", help="write per-tap estimates (accuracy_2d)")
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

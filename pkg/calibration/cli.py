"""
Command-line interface for the calibration toolkit.

Usage:
    python -m calibration simulate --output run.jsonl --seed 3 --rig ring
    python -m calibration calibrate-offline --input run.jsonl --output calib.json
    python -m calibration calibrate-online --input run.jsonl --initial calib.json --output online.jsonl
    python -m calibration evaluate --input calib.json --truth run.truth.json
    python -m calibration sweep --grid "poles_position=0,0.1,0.2" --reps 3 --output sweep.csv
    python -m calibration dump-mip --input run.jsonl --output stage2.lp
"""

import argparse
import json
import math
import os
import sys
from typing import Optional, Sequence

import config
from association import build_candidates
from calibration.overlap_mip import build_mip, dump_lp
from calibration.pipeline import estimate_yaws, guess_translations, run_offline
from calibration.settings import CalibrationSettings, SettingsManager
from calibration.models import CalibrationSet, Stage
from calibration.yaw_estimator import calibration_from_yaw
from errors import CalibrationError, InvalidParams
from evaluation import evaluate, render_report
from evaluation.sweep import parse_grid, sweep_distortions, write_sweep
from geometry import RigidTransform
from monitoring import RunLogger, set_run_logger
from online import OnlineCalibrator
from simulator import (
    DistortionSpec,
    RenderOptions,
    ScenarioParams,
    apply_distortion,
    generate_scenario,
    make_rig,
    perturb_mount,
    render_frames,
    true_calibration,
)
from streams import read_calibration, read_streams, write_calibration, write_streams

EXIT_OK = 0
EXIT_USAGE = 2


def _add_common(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("Common Options")
    group.add_argument("--config", type=str, help="JSON settings override file")
    group.add_argument("--run-log", type=str, help="Append structured run events to this JSONL file")
    group.add_argument("--quiet", "-q", action="store_true", help="Suppress the text summary")


def _add_mip_options(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("Stage Parameters")
    group.add_argument("--lambda", dest="lam", type=float,
                       help="Max matching error of a selected pole pair in meters (default: 0.5)")
    group.add_argument("--gamma", type=float, help="Yaw trust radius around the Stage-1 yaw in radians")
    group.add_argument("--anchor-sensor", type=str, help="Sensor whose measured height fixes the z offset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m calibration",
        description="Extrinsic calibration of multi-LiDAR rigs from poles, ground and egomotion",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Simulate a ring rig and calibrate it offline
  python -m calibration simulate --rig ring --seed 1 --output data/run.jsonl
  python -m calibration calibrate-offline --input data/run.jsonl --output data/calib.json \\
      --truth data/run.truth.json

  # Track a mounting change online
  python -m calibration simulate --rig four --frames 3000 --output data/long.jsonl \\
      --perturb front_left:50:2 --perturb front_left:175:0:0:0.1:0
  python -m calibration calibrate-online --input data/long.jsonl --output data/online.jsonl

  # Distortion sweep
  python -m calibration sweep --grid "all=0,0.05,0.1" --reps 5 --workers 4 --output sweep.csv
        """,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    # simulate
    sim = sub.add_parser("simulate", help="Write a synthetic stream file and its ground truth")
    io_group = sim.add_argument_group("Output Options")
    io_group.add_argument("--output", "-o", type=str, required=True, help="Stream file (JSONL)")
    io_group.add_argument("--truth", type=str, help="Ground-truth calibration file (default: <output>.truth.json)")
    scn_group = sim.add_argument_group("Scenario Options")
    scn_group.add_argument("--seed", type=int, default=0, help="Scenario seed (default: 0)")
    scn_group.add_argument("--rig", type=str, default="four", help="Rig layout: four or ring (default: four)")
    scn_group.add_argument("--frames", type=int, default=300, help="Number of timestamps (default: 300)")
    scn_group.add_argument("--straight", action="store_true", help="Drive a straight line instead of a loop")
    scn_group.add_argument("--dropout", action="store_true", help="Randomly drop pole detections")
    scn_group.add_argument("--sidewalks", action="store_true", help="Raise far ground in some frames")
    scn_group.add_argument("--distortion", type=str,
                           help="Distort the features, KIND=AMOUNT (e.g. poles_position=0.1)")
    scn_group.add_argument("--perturb", action="append", default=[],
                           help="Mount change SENSOR:TIME:DYAW_DEG[:DX:DY:DZ], repeatable")
    _add_common(sim)

    # calibrate-offline
    off = sub.add_parser("calibrate-offline", help="Run the three-stage offline calibration")
    io_group = off.add_argument_group("Input/Output Options")
    io_group.add_argument("--input", "-i", type=str, required=True, help="Stream file (JSONL)")
    io_group.add_argument("--output", "-o", type=str, required=True, help="Calibration file (JSON)")
    io_group.add_argument("--truth", type=str, help="Ground-truth calibration to evaluate against")
    io_group.add_argument("--details", type=str, help="Write per-stage results (JSON)")
    _add_mip_options(off)
    _add_common(off)

    # calibrate-online
    onl = sub.add_parser("calibrate-online", help="Replay a stream through the online calibrator")
    io_group = onl.add_argument_group("Input/Output Options")
    io_group.add_argument("--input", "-i", type=str, required=True, help="Stream file (JSONL)")
    io_group.add_argument("--output", "-o", type=str, required=True, help="Per-step reports (JSONL)")
    io_group.add_argument("--initial", type=str,
                          help="Starting calibration (JSON); runs the offline pipeline on the first window if absent")
    io_group.add_argument("--final", type=str, help="Write the last calibration (JSON)")
    online_group = onl.add_argument_group("Online Parameters")
    online_group.add_argument("--window", type=int, help="Sliding window length in frames (default: 100)")
    online_group.add_argument("--alpha", type=float, help="Damping of every update, 0 < alpha <= 1 (default: 0.2)")
    _add_mip_options(onl)
    _add_common(onl)

    # evaluate
    ev = sub.add_parser("evaluate", help="Compare a calibration with ground truth")
    io_group = ev.add_argument_group("Input/Output Options")
    io_group.add_argument("--input", "-i", type=str, required=True, help="Estimated calibration (JSON)")
    io_group.add_argument("--truth", type=str, required=True, help="Ground-truth calibration (JSON)")
    io_group.add_argument("--output", "-o", type=str, help="Per-sensor error table (CSV)")
    _add_common(ev)

    # sweep
    sw = sub.add_parser("sweep", help="Distortion robustness sweep")
    io_group = sw.add_argument_group("Input/Output Options")
    io_group.add_argument("--output", "-o", type=str, required=True, help="Result table (CSV)")
    sweep_group = sw.add_argument_group("Sweep Options")
    sweep_group.add_argument("--grid", type=str,
                             help="KIND=A,B;KIND=C or all=A,B (default: every kind over 0,0.05,0.1,0.2,0.3)")
    sweep_group.add_argument("--reps", type=int, default=10, help="Experiments per cell (default: 10)")
    sweep_group.add_argument("--seed", type=int, default=0, help="Seed of the first repetition (default: 0)")
    sweep_group.add_argument("--workers", type=int, default=1, help="Worker processes (default: 1)")
    sweep_group.add_argument("--rig", type=str, default="ring", help="Rig layout (default: ring)")
    sweep_group.add_argument("--frames", type=int, default=300, help="Timestamps per scenario (default: 300)")
    _add_mip_options(sw)
    _add_common(sw)

    # dump-mip
    dm = sub.add_parser("dump-mip", help="Write the Stage-2 instance in LP format")
    io_group = dm.add_argument_group("Input/Output Options")
    io_group.add_argument("--input", "-i", type=str, required=True, help="Stream file (JSONL)")
    io_group.add_argument("--output", "-o", type=str, required=True, help="LP file")
    _add_mip_options(dm)
    _add_common(dm)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    return build_parser().parse_args(argv)


def load_settings(args: argparse.Namespace) -> CalibrationSettings:
    manager = SettingsManager(args.config)
    manager.apply_cli(args)
    return manager.settings


def _parse_perturbation(text: str) -> tuple[str, float, RigidTransform]:
    parts = text.split(":")
    if len(parts) not in (3, 6):
        raise InvalidParams(f"perturbation '{text}' must look like SENSOR:TIME:DYAW_DEG[:DX:DY:DZ]", stage="cli")
    try:
        values = [float(p) for p in parts[1:]]
    except ValueError as e:
        raise InvalidParams(f"perturbation '{text}' has a non-numeric field", stage="cli") from e
    t, dyaw = values[0], math.radians(values[1])
    shift = values[2:] if len(values) == 5 else [0.0, 0.0, 0.0]
    return parts[0], t, RigidTransform.from_yaw(dyaw, shift)


def _parse_distortion(text: str, seed: int) -> DistortionSpec:
    kind, _, amount = text.partition("=")
    try:
        return DistortionSpec(kind.strip(), float(amount), seed)
    except ValueError as e:
        raise InvalidParams(f"distortion '{text}' must look like KIND=AMOUNT", stage="cli") from e


def cmd_simulate(args: argparse.Namespace) -> int:
    params = ScenarioParams(frames=args.frames, turns=not args.straight)
    scn = generate_scenario(params, args.seed, make_rig(args.rig))
    for text in args.perturb:
        sensor_id, t, delta = _parse_perturbation(text)
        scn = perturb_mount(scn, sensor_id, delta, t)
    rendering = render_frames(scn, RenderOptions(dropout=args.dropout, sidewalks=args.sidewalks))
    frames = rendering.frames
    if args.distortion:
        frames = apply_distortion(frames, _parse_distortion(args.distortion, args.seed))

    count = write_streams(args.output, rendering.ego, frames, scn.sensors, scn.vehicle,
                          producer="simulator", seed=args.seed)
    truth_path = args.truth or f"{os.path.splitext(args.output)[0]}.truth.json"
    write_calibration(truth_path, true_calibration(scn))
    if not args.quiet:
        print(f"Wrote {count} records to {args.output}")
        print(f"Wrote ground truth to {truth_path}")
    return EXIT_OK


def cmd_calibrate_offline(args: argparse.Namespace) -> int:
    settings = load_settings(args)
    bundle = read_streams(args.input, settings.io.sync_tol)
    truth = read_calibration(args.truth) if args.truth else None
    result = run_offline(bundle.frames, bundle.ego, bundle.sensors, bundle.vehicle, settings, truth)
    write_calibration(args.output, result.calibration)
    if args.details:
        with open(args.details, "w", encoding="utf-8") as f:
            json.dump(result.to_dict(), f, indent=2, sort_keys=True)
    if not args.quiet:
        print(f"Calibrated {len(result.calibration)} sensors -> {args.output}")
        for warning in result.calibration.warnings:
            print(f"  warning: {warning}")
        if result.report is not None:
            print()
            print(render_report(result.report))
    return EXIT_OK


def _bootstrap_calibration(bundle, settings: CalibrationSettings) -> CalibrationSet:
    """Offline calibration on the first window of the stream."""
    times = bundle.frame_times()[:settings.online.window]
    if not times:
        raise InvalidParams("stream has no frames to start the online calibrator from", stage="online")
    last = times[-1]
    frames = {sid: [f for f in stream if f.timestamp <= last] for sid, stream in bundle.frames.items()}
    return run_offline(frames, bundle.ego, bundle.sensors, bundle.vehicle, settings).calibration


def cmd_calibrate_online(args: argparse.Namespace) -> int:
    settings = load_settings(args)
    bundle = read_streams(args.input, settings.io.sync_tol)
    if args.initial:
        initial = read_calibration(args.initial)
    else:
        initial = _bootstrap_calibration(bundle, settings)
    calibrator = OnlineCalibrator(settings)
    calibrator.initialize(initial, bundle.sensors, bundle.vehicle)
    reports = calibrator.replay(bundle.ego, bundle.frames)
    calibrator.write_reports(args.output, reports)
    if args.final:
        write_calibration(args.final, calibrator.calibration)
    if not args.quiet:
        worst = max((r.step_ms for r in reports), default=0.0)
        print(f"Replayed {len(reports)} steps -> {args.output} (slowest step {worst:.1f} ms)")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    report = evaluate(read_calibration(args.input), read_calibration(args.truth))
    if args.output:
        report.to_csv(args.output)
    if not args.quiet:
        print(render_report(report))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    settings = load_settings(args)
    grid = parse_grid(args.grid)
    table = sweep_distortions(ScenarioParams(frames=args.frames), grid, args.reps, args.seed,
                              args.workers, args.rig, settings)
    write_sweep(table, args.output)
    if not args.quiet:
        print(table.to_string(index=False))
    return EXIT_OK


def cmd_dump_mip(args: argparse.Namespace) -> int:
    settings = load_settings(args)
    bundle = read_streams(args.input, settings.io.sync_tol)
    yaws = estimate_yaws(bundle.frames, bundle.ego, bundle.sensors, settings)
    yaw_calib = CalibrationSet({s.id: calibration_from_yaw(s, yaws[s.id].yaw) for s in bundle.sensors}, Stage.YAW_ONLY)
    _, guess = guess_translations(bundle.frames, yaw_calib, bundle.sensors, bundle.vehicle, settings)
    assoc = settings.association
    candidates = build_candidates(bundle.frames, guess, bundle.sensors, assoc.candidate_gate,
                                  assoc.candidate_cap, assoc.wedge_overrides, assoc.wedge_margin)
    problem = build_mip(candidates, yaws, bundle.vehicle, settings, bundle.sensors)
    dump_lp(problem, args.output)
    if not args.quiet:
        print(f"Wrote {problem.num_candidates} candidates over {problem.num_sensors} sensors to {args.output}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate-offline": cmd_calibrate_offline,
    "calibrate-online": cmd_calibrate_online,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "dump-mip": cmd_dump_mip,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for CLI."""
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    run_log = args.run_log or config.RUN_LOG_PATH or None
    if run_log or args.quiet:
        set_run_logger(RunLogger(run_log, level="warn" if args.quiet else None))
    try:
        return COMMANDS[args.command](args)
    except CalibrationError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return CalibrationError.exit_code


if __name__ == "__main__":
    sys.exit(main())

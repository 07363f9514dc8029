"""
Offline calibration pipeline.

Chains the three stages on recorded streams: per-sensor yaw from egomotion,
cross-sensor x/y/yaw from the overlap MIP, and the joint 6-DoF refinement
followed by height anchoring and the egomotion gauge alignment.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from association import (
    CandidatePair,
    PairOffset,
    SensorConfig,
    VehicleGeometry,
    build_candidates,
    neighbor_pairs,
    pair_offsets,
    translation_guess,
)
from calibration.egomotion_alignment import align_to_egomotion
from calibration.joint_refine import (
    PlanePairObservation,
    anchor_absolute_height,
    collect_plane_pairs,
    refine,
)
from calibration.models import CalibrationSet, Stage
from calibration.overlap_mip import MipSolution, build_mip, extract_feasible_pairs, seed_poses, solve_seeded
from calibration.settings import CalibrationSettings, resolve
from calibration.yaw_estimator import YawEstimate, calibration_from_yaw, estimate_yaw
from errors import CalibrationError, NonConvergence
from evaluation.metrics import EvaluationReport, evaluate
from features import FrameStreams
from geometry import TimedPose
from monitoring import get_run_logger
from monitoring.reason_codes import NO_GROUND_OVERLAP, YAW_NONCONVERGENCE

NO_GROUND_WARNING = "no ground overlap: plane terms skipped in refinement"
MIP_GAP_WARNING = "overlap search stopped at the node or time limit with gap"


@dataclass
class OfflineResult:
    """Final calibration plus the intermediate products of every stage."""
    calibration: CalibrationSet
    yaw_estimates: dict[str, YawEstimate]
    yaw_calibration: CalibrationSet
    mip_calibration: CalibrationSet
    mip: MipSolution
    candidates: list[CandidatePair]
    pole_pairs: list[CandidatePair]
    plane_pairs: list[PlanePairObservation]
    guess_calibration: Optional[CalibrationSet] = None
    offsets: dict[str, PairOffset] = field(default_factory=dict)
    runtimes: dict[str, float] = field(default_factory=dict)
    report: Optional[EvaluationReport] = None

    def to_dict(self) -> dict:
        return {
            "calibration": self.calibration.to_dict(),
            "yaw": {sid: est.to_dict() for sid, est in self.yaw_estimates.items()},
            "mip": self.mip.to_dict(),
            "offsets": {key: o.to_dict() for key, o in self.offsets.items()},
            "candidates": len(self.candidates),
            "pole_pairs": len(self.pole_pairs),
            "plane_pairs": len(self.plane_pairs),
            "runtimes": dict(self.runtimes),
            "report": self.report.to_dict() if self.report is not None else None,
        }


@contextmanager
def _stage(name: str, runtimes: dict[str, float]) -> Iterator[dict]:
    """Time a stage, log it and tag escaping calibration errors with the stage name."""
    start = time.perf_counter()
    try:
        with get_run_logger().timed(name, "stage") as outputs:
            yield outputs
    except CalibrationError as exc:
        raise exc.with_stage(name)
    finally:
        runtimes[name] = time.perf_counter() - start


def _unique(warnings: Sequence[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(warnings))


def estimate_yaws(frames: FrameStreams, ego: Sequence[TimedPose], sensors: Sequence[SensorConfig],
                  cfg: CalibrationSettings) -> dict[str, YawEstimate]:
    """Stage 1 for every sensor, in a thread pool when yaw.workers > 1.

    A non-converged estimate is kept with a warning.
    """

    def run(sensor: SensorConfig) -> YawEstimate:
        try:
            return estimate_yaw(frames.get(sensor.id, []), ego, sensor, cfg)
        except NonConvergence as exc:
            if exc.result is None:
                raise
            get_run_logger().warn("yaw", "not_converged", sensor=sensor.id,
                                  reason_code=YAW_NONCONVERGENCE, reason=str(exc))
            result: YawEstimate = exc.result
            return YawEstimate(
                sensor_id=result.sensor_id,
                yaw=result.yaw,
                residual=result.residual,
                iterations=result.iterations,
                match_count=result.match_count,
                converged=False,
                warnings=result.warnings + (f"sensor {sensor.id}: yaw did not converge",),
                cost_history=result.cost_history,
            )

    if cfg.yaw.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.yaw.workers) as pool:
            results = list(pool.map(run, sensors))
    else:
        results = [run(sensor) for sensor in sensors]
    return {sensor.id: est for sensor, est in zip(sensors, results)}


def guess_translations(frames: FrameStreams, yaw_calib: CalibrationSet, sensors: Sequence[SensorConfig],
                       vehicle: VehicleGeometry,
                       cfg: CalibrationSettings) -> tuple[dict[str, PairOffset], CalibrationSet]:
    """Pair offsets under the yaw-only calibrations and the x/y guess they imply."""
    offsets = pair_offsets(
        frames, yaw_calib, sensors,
        radius=vehicle.diagonal,
        bin_size=cfg.association.consensus_bin,
        min_support=cfg.association.consensus_min_support,
        overrides=cfg.association.wedge_overrides,
    )
    return offsets, translation_guess(yaw_calib, offsets, vehicle)


def run_offline(frames: FrameStreams, ego: Sequence[TimedPose], sensors: Sequence[SensorConfig],
                vehicle: Optional[VehicleGeometry] = None,
                settings: Optional[CalibrationSettings] = None,
                truth: Optional[CalibrationSet] = None) -> OfflineResult:
    """
    Full offline calibration of a rig from recorded streams.

    When truth is given the result carries an evaluation report.

    Raises:
        CalibrationError: any stage failure, tagged with the stage it came from
    """
    cfg = resolve(settings)
    vehicle = vehicle or VehicleGeometry()
    log = get_run_logger()
    runtimes: dict[str, float] = {}
    sensors = list(sensors)
    last_time = max((f.timestamp for stream in frames.values() for f in stream), default=None)

    with _stage("yaw", runtimes) as out:
        yaws = estimate_yaws(frames, ego, sensors, cfg)
        warnings = [w for est in yaws.values() for w in est.warnings]
        yaw_calib = CalibrationSet(
            {s.id: calibration_from_yaw(s, yaws[s.id].yaw) for s in sensors},
            Stage.YAW_ONLY,
            last_time,
            _unique(warnings),
        )
        out["yaws"] = {sid: est.yaw for sid, est in yaws.items()}

    overrides = cfg.association.wedge_overrides
    with _stage("association", runtimes) as out:
        offsets, guess = guess_translations(frames, yaw_calib, sensors, vehicle, cfg)
        candidates = build_candidates(
            frames, guess, sensors,
            gate=cfg.association.candidate_gate,
            cap=cfg.association.candidate_cap,
            overrides=overrides,
            margin=cfg.association.wedge_margin,
        )
        out.update({"offsets": len(offsets), "candidates": len(candidates)})

    with _stage("mip", runtimes) as out:
        problem = build_mip(candidates, yaws, vehicle, cfg, sensors)
        solution = solve_seeded(problem, seed_poses(problem, guess), cfg)
        mip_calib = solution.to_calibration(problem, yaw_calib)
        if solution.gap > cfg.mip.gap_tol:
            mip_calib = mip_calib.with_warning(f"{MIP_GAP_WARNING} {solution.gap:.3g}")
        pole_pairs = extract_feasible_pairs(solution, candidates)
        out.update({"status": solution.status.value, "selected": len(pole_pairs), "gap": solution.gap})

    with _stage("refine", runtimes) as out:
        wedges = neighbor_pairs(sensors, mip_calib, overrides)
        plane_pairs = collect_plane_pairs(frames, mip_calib, wedges, cfg)
        if not plane_pairs:
            log.warn("refine", "no_plane_pairs", reason_code=NO_GROUND_OVERLAP)
            mip_calib = mip_calib.with_warning(NO_GROUND_WARNING)
        calib = refine(mip_calib, pole_pairs, plane_pairs, cfg, vehicle=vehicle)
        anchor = cfg.refine.anchor_sensor or sensors[0].id
        calib = anchor_absolute_height(calib, frames.get(anchor, []), cfg, anchor)
        out.update({"plane_pairs": len(plane_pairs), "anchor": anchor})

    if cfg.refine.align_egomotion:
        with _stage("align", runtimes):
            calib = align_to_egomotion(calib, frames, ego, cfg)

    calib = calib.replace(stage=Stage.FULL, timestamp=last_time, warnings=_unique(calib.warnings))
    report = evaluate(calib, truth, runtimes) if truth is not None else None
    log.info("pipeline", "offline_complete", outputs={
        "sensors": len(calib),
        "warnings": len(calib.warnings),
        "runtime": sum(runtimes.values()),
    })
    return OfflineResult(
        calibration=calib,
        yaw_estimates=yaws,
        yaw_calibration=yaw_calib,
        mip_calibration=mip_calib,
        mip=solution,
        candidates=candidates,
        pole_pairs=pole_pairs,
        plane_pairs=plane_pairs,
        guess_calibration=guess,
        offsets=offsets,
        runtimes=runtimes,
        report=report,
    )

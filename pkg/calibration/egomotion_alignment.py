"""
Common planar gauge of the rig, recovered from egomotion.

The cross-sensor stages only constrain sensors relative to each other: moving
and turning the whole rig in the ground plane leaves their costs unchanged.
The hand-eye relation does see this motion through the lever arm of every
sensor, so the common (dx, dy, dyaw) is fitted to the temporal pole matches
of all sensors at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from calibration.models import CalibrationSet
from calibration.settings import CalibrationSettings, resolve
from calibration.yaw_estimator import (
    DEGENERATE_MOTION_WARNING,
    HandEyeProblem,
    match_stream,
    vehicle_increments,
    yaw_excitation,
)
from features import FrameStreams
from geometry import RigidTransform, TimedPose, compose
from monitoring import get_run_logger
from monitoring.reason_codes import DEGENERATE_MOTION, EMPTY_MATCHES

SOFT_L1_SCALE = 0.05  # m, residual size where the loss turns linear
PARAM_SCALE = np.array([1.0, 1.0, 0.05])


@dataclass(frozen=True)
class GaugeCorrection:
    dx: float = 0.0
    dy: float = 0.0
    dyaw: float = 0.0
    cost_before: float = 0.0
    cost_after: float = 0.0
    matches: int = 0

    @property
    def transform(self) -> RigidTransform:
        return RigidTransform.from_yaw(self.dyaw, (self.dx, self.dy, 0.0))

    def to_dict(self) -> dict:
        return {
            "dx": self.dx,
            "dy": self.dy,
            "dyaw": self.dyaw,
            "cost_before": self.cost_before,
            "cost_after": self.cost_after,
            "matches": self.matches,
        }


def apply_gauge(calib: CalibrationSet, gauge: RigidTransform) -> CalibrationSet:
    """Left-compose one vehicle-frame transform onto every sensor calibration."""
    return calib.replace(transforms={sid: compose(gauge, T) for sid, T in calib.transforms.items()})


def _hand_eye_problems(calib: CalibrationSet, frames: FrameStreams, ego: Sequence[TimedPose],
                       max_dist: float) -> tuple[dict[str, HandEyeProblem], float]:
    problems: dict[str, HandEyeProblem] = {}
    excitation = 0.0
    for sid in calib.sensor_ids:
        stream = sorted(frames.get(sid, []), key=lambda f: f.timestamp)
        if len(stream) < 2:
            continue
        incs = vehicle_increments(stream, ego)
        excitation = max(excitation, yaw_excitation(incs))
        problem = HandEyeProblem.from_matches(incs, match_stream(stream, incs, calib[sid], max_dist))
        if len(problem):
            problems[sid] = problem
    return problems, excitation


def estimate_gauge(calib: CalibrationSet, frames: FrameStreams, ego: Sequence[TimedPose],
                   settings: Optional[CalibrationSettings] = None) -> Optional[GaugeCorrection]:
    """
    Fit the common planar correction; None when the motion cannot observe it.
    A zero correction is returned when no sensor has temporal matches.

    Matches are formed once under the current calibration. The pooled
    residuals use a soft-L1 loss so that a few wrong matches do not drag
    the gauge.
    """
    cfg = resolve(settings)
    log = get_run_logger()
    problems, excitation = _hand_eye_problems(calib, frames, ego, cfg.association.match_max_dist)
    if excitation < cfg.yaw.min_excitation:
        log.warn("align", "low_excitation", reason_code=DEGENERATE_MOTION, inputs={"excitation": excitation})
        return None
    if not problems:
        log.warn("align", "no_matches", reason_code=EMPTY_MATCHES)
        return GaugeCorrection()

    def residuals(params: np.ndarray) -> np.ndarray:
        gauge = RigidTransform.from_yaw(params[2], (params[0], params[1], 0.0))
        return np.concatenate([
            problem.residuals(compose(gauge, calib[sid])).ravel() for sid, problem in problems.items()
        ])

    r0 = residuals(np.zeros(3))
    result = least_squares(residuals, np.zeros(3), loss="soft_l1", f_scale=SOFT_L1_SCALE,
                           x_scale=PARAM_SCALE, method="trf")
    return GaugeCorrection(
        dx=float(result.x[0]),
        dy=float(result.x[1]),
        dyaw=float(result.x[2]),
        cost_before=float(np.sum(r0 ** 2)),
        cost_after=float(np.sum(result.fun ** 2)),
        matches=sum(len(p) for p in problems.values()),
    )


def align_to_egomotion(calib: CalibrationSet, frames: FrameStreams, ego: Sequence[TimedPose],
                       settings: Optional[CalibrationSettings] = None) -> CalibrationSet:
    """
    Move the whole rig by the common (dx, dy, dyaw) that best explains egomotion.

    Returns the input with a degeneracy warning when the trajectory has too
    little turning to observe the gauge.
    """
    correction = estimate_gauge(calib, frames, ego, settings)
    if correction is None:
        if DEGENERATE_MOTION_WARNING in calib.warnings:
            return calib
        return calib.with_warning(DEGENERATE_MOTION_WARNING)
    get_run_logger().debug("align", "gauge", outputs=correction.to_dict())
    return apply_gauge(calib, correction.transform)

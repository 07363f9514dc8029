"""
Stage 1: per-sensor yaw from egomotion and temporally matched poles.

The hand-eye relation predicts each sensor-frame increment from the vehicle
increment and a calibration guess. The yaw that best explains the matched
pole motion is found by a global grid followed by a bounded scalar search;
matching and minimization alternate until the yaw stops moving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.transform import Rotation

from association import SensorConfig, TemporalMatchSet, match_consecutive
from calibration.settings import CalibrationSettings, resolve
from errors import EmptyMatches, NonConvergence
from features import FeatureFrame, pole_pair_distances, pole_pair_residuals, transform_pole_array
from geometry import (
    RigidTransform,
    TimedPose,
    conjugate_increment,
    poses_at,
    relative_increments,
    wrap_angle,
)
from monitoring import get_run_logger
from monitoring.reason_codes import DEGENERATE_MOTION

DEGENERATE_MOTION_WARNING = "degenerate motion: trajectory has too little yaw excitation"


@dataclass(frozen=True)
class YawEstimate:
    sensor_id: str
    yaw: float
    residual: float
    iterations: int
    match_count: int
    converged: bool = True
    warnings: tuple[str, ...] = ()
    cost_history: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "sensor_id": self.sensor_id,
            "yaw": self.yaw,
            "yaw_deg": math.degrees(self.yaw),
            "residual": self.residual,
            "iterations": self.iterations,
            "match_count": self.match_count,
            "converged": self.converged,
            "warnings": list(self.warnings),
        }


@dataclass
class HandEyeProblem:
    """
    Matched pole pairs of one sensor stacked with their vehicle increments.

    Row k pairs prev_poles[k] (sensor frame at t-1) with curr_poles[k]
    (sensor frame at t) under the vehicle increment (inc_rot[k], inc_trans[k]).
    """
    prev_poles: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 3)))
    curr_poles: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 3)))
    inc_rot: np.ndarray = field(default_factory=lambda: np.zeros((0, 3, 3)))
    inc_trans: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __len__(self) -> int:
        return len(self.prev_poles)

    @classmethod
    def from_matches(cls, vehicle_incs: Sequence[RigidTransform],
                     matches: Sequence[TemporalMatchSet]) -> "HandEyeProblem":
        if len(vehicle_incs) != len(matches):
            raise ValueError("vehicle increments and match sets must be aligned")
        prev, curr, rot, trans = [], [], [], []
        for inc, match in zip(vehicle_incs, matches):
            n = len(match)
            if n == 0:
                continue
            prev.append(match.prev_poles)
            curr.append(match.curr_poles)
            rot.append(np.broadcast_to(inc.rotation_matrix, (n, 3, 3)))
            trans.append(np.broadcast_to(inc.translation, (n, 3)))
        if not prev:
            return cls()
        return cls(np.concatenate(prev), np.concatenate(curr), np.concatenate(rot), np.concatenate(trans))

    @classmethod
    def concatenate(cls, problems: Sequence["HandEyeProblem"]) -> "HandEyeProblem":
        problems = [p for p in problems if len(p)]
        if not problems:
            return cls()
        return cls(
            np.concatenate([p.prev_poles for p in problems]),
            np.concatenate([p.curr_poles for p in problems]),
            np.concatenate([p.inc_rot for p in problems]),
            np.concatenate([p.inc_trans for p in problems]),
        )

    def residuals(self, calib: RigidTransform) -> np.ndarray:
        """Offset vectors (N,6) whose row norms are D(Q_prev, dS * P_curr) with dS = C^-1 dV C."""
        if len(self) == 0:
            return np.zeros((0, 6))
        rc = calib.rotation_matrix
        tc = calib.translation
        rot = np.einsum("ji,njk,kl->nil", rc, self.inc_rot, rc)
        trans = (np.einsum("nij,j->ni", self.inc_rot, tc) + self.inc_trans - tc) @ rc
        mapped = transform_pole_array(rot, trans, self.curr_poles)
        return pole_pair_residuals(self.prev_poles, mapped)

    def distances(self, calib: RigidTransform) -> np.ndarray:
        """Pole distances D(Q_prev, dS * P_curr)."""
        if len(self) == 0:
            return np.zeros(0)
        return np.linalg.norm(self.residuals(calib), axis=1)

    def batch_costs(self, rotations: np.ndarray, translations: np.ndarray, chunk: int = 32) -> np.ndarray:
        """Mean distances for a stack of calibrations given as (T,3,3) rotations and (T,3) translations."""
        if len(self) == 0:
            raise EmptyMatches("no matched pole pairs to evaluate")
        out = np.empty(len(rotations))
        n = len(self)
        for start in range(0, len(rotations), chunk):
            rc = rotations[start:start + chunk]
            tc = translations[start:start + chunk]
            rot = np.einsum("tji,njk,tkl->tnil", rc, self.inc_rot, rc)
            moved = np.einsum("nij,tj->tni", self.inc_rot, tc) + self.inc_trans[None] - tc[:, None, :]
            trans = np.einsum("tni,til->tnl", moved, rc)
            mapped = np.einsum("tnij,nkj->tnki", rot, self.curr_poles) + trans[:, :, None, :]
            prev = np.broadcast_to(self.prev_poles, mapped.shape).reshape(-1, 2, 3)
            dist = pole_pair_distances(prev, mapped.reshape(-1, 2, 3)).reshape(len(rc), n)
            out[start:start + chunk] = dist.sum(axis=1) / n
        return out

    def cost(self, calib: RigidTransform) -> float:
        """Mean matched-pole distance under a sensor calibration guess."""
        if len(self) == 0:
            raise EmptyMatches("no matched pole pairs to evaluate")
        return float(self.distances(calib).sum() / len(self))


def vehicle_increments(frames: Sequence[FeatureFrame], ego: Sequence[TimedPose]) -> list[RigidTransform]:
    """Vehicle increments T^{V[t-1]}_{V[t]} between consecutive frame timestamps."""
    return relative_increments(poses_at(ego, [frame.timestamp for frame in frames]))


def yaw_excitation(vehicle_incs: Sequence[RigidTransform]) -> float:
    """Total absolute yaw change over a sequence of vehicle increments (radians)."""
    return float(sum(abs(inc.yaw) for inc in vehicle_incs))


def match_stream(frames: Sequence[FeatureFrame], vehicle_incs: Sequence[RigidTransform],
                 calib: Optional[RigidTransform], max_dist: float) -> list[TemporalMatchSet]:
    """Temporal matches of every consecutive frame pair; predicted by calib when given."""
    matches = []
    for k, inc in enumerate(vehicle_incs):
        predicted = conjugate_increment(calib, inc) if calib is not None else None
        matches.append(match_consecutive(frames[k], frames[k + 1], predicted, max_dist))
    return matches


def calibration_from_yaw(sensor: SensorConfig, theta: float,
                         translation: Sequence[float] = (0.0, 0.0, 0.0)) -> RigidTransform:
    """Calibration guess from the sensor's roll/pitch guesses and a yaw."""
    return RigidTransform.from_euler(sensor.roll_guess, sensor.pitch_guess, theta, translation)


def euler_rotation_matrices(roll: float, pitch: float, yaws: np.ndarray) -> np.ndarray:
    """Rotation matrices (T,3,3) of intrinsic Z-Y-X angles with fixed roll and pitch."""
    yaws = np.asarray(yaws, dtype=float)
    angles = np.column_stack([yaws, np.full_like(yaws, pitch), np.full_like(yaws, roll)])
    return Rotation.from_euler("ZYX", angles).as_matrix()


def yaw_cost(theta: float, vehicle_incs: Sequence[RigidTransform], matches: Sequence[TemporalMatchSet],
             roll: float = 0.0, pitch: float = 0.0) -> float:
    """Mean pole distance of the matches under calibration (roll, pitch, theta), zero translation."""
    problem = HandEyeProblem.from_matches(vehicle_incs, matches)
    return problem.cost(RigidTransform.from_euler(roll, pitch, theta))


def minimize_yaw(cost: Callable[[float], float], lo: float, hi: float, samples: int, tol: float,
                 grid_cost: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> tuple[float, float]:
    """
    Global grid over [lo, hi] then bounded scalar refinement around the best sample.

    grid_cost, when given, evaluates the whole grid at once. Grid ties resolve
    to the lowest angle. Returns (theta, cost).
    """
    grid = np.linspace(lo, hi, samples)
    if grid_cost is not None:
        values = np.asarray(grid_cost(grid), dtype=float)
    else:
        values = np.array([cost(float(t)) for t in grid])
    best = int(np.argmin(values))
    step = (hi - lo) / max(samples - 1, 1)
    result = minimize_scalar(
        cost,
        bounds=(grid[best] - step, grid[best] + step),
        method="bounded",
        options={"xatol": tol * 0.1},
    )
    if result.success and result.fun < values[best]:
        return float(result.x), float(result.fun)
    return float(grid[best]), float(values[best])


def estimate_yaw(frames: Sequence[FeatureFrame], ego: Sequence[TimedPose], sensor: SensorConfig,
                 settings: Optional[CalibrationSettings] = None) -> YawEstimate:
    """
    Alternate temporal matching and 1-D yaw minimization until the yaw converges.

    The first pass matches without a prediction and searches the full circle;
    later passes predict the sensor increment from the current yaw and search
    only within yaw.local_search of it. An iteration whose minimum cost is
    worse than the previous one is discarded and the loop stops.

    Raises:
        EmptyMatches: no pole pairs could be matched
        NonConvergence: max_iters reached while the yaw still moves (best estimate attached)
        OutOfRange: egomotion does not cover the frame timestamps
    """
    cfg = resolve(settings)
    log = get_run_logger()
    frames = sorted(frames, key=lambda f: f.timestamp)
    if len(frames) < 2:
        raise EmptyMatches(f"sensor {sensor.id}: need at least two frames", stage="yaw")

    incs = vehicle_increments(frames, ego)
    warnings: list[str] = []
    if yaw_excitation(incs) < cfg.yaw.min_excitation:
        warnings.append(DEGENERATE_MOTION_WARNING)
        log.warn("yaw", "low_excitation", sensor=sensor.id, reason_code=DEGENERATE_MOTION,
                 inputs={"excitation": yaw_excitation(incs)})

    theta: Optional[float] = None
    best_cost = math.inf
    history: list[float] = []
    match_count = 0
    delta = math.inf
    iterations = 0

    for iterations in range(1, cfg.yaw.max_iters + 1):
        guess = calibration_from_yaw(sensor, theta) if theta is not None else None
        problem = HandEyeProblem.from_matches(incs, match_stream(frames, incs, guess, cfg.association.match_max_dist))
        if len(problem) == 0:
            if theta is None:
                raise EmptyMatches(f"sensor {sensor.id}: no temporal pole matches", stage="yaw")
            break

        def cost(t: float) -> float:
            return problem.cost(calibration_from_yaw(sensor, t))

        def grid_cost(thetas: np.ndarray) -> np.ndarray:
            rotations = euler_rotation_matrices(sensor.roll_guess, sensor.pitch_guess, thetas)
            return problem.batch_costs(rotations, np.zeros((len(thetas), 3)))

        if theta is None:
            lo, hi, samples = -math.pi, math.pi, cfg.yaw.grid_samples
        else:
            lo, hi, samples = theta - cfg.yaw.local_search, theta + cfg.yaw.local_search, cfg.yaw.local_samples
        new_theta, new_cost = minimize_yaw(cost, lo, hi, samples, cfg.yaw.tol, grid_cost)
        new_theta = wrap_angle(new_theta)
        if theta is not None and new_cost > best_cost + 1e-12:
            delta = 0.0
            break

        delta = math.inf if theta is None else abs(wrap_angle(new_theta - theta))
        theta, best_cost, match_count = new_theta, new_cost, len(problem)
        history.append(new_cost)
        if delta < cfg.yaw.tol:
            break

    converged = delta < 10 * cfg.yaw.tol
    estimate = YawEstimate(
        sensor_id=sensor.id,
        yaw=theta,
        residual=best_cost,
        iterations=iterations,
        match_count=match_count,
        converged=converged,
        warnings=tuple(warnings),
        cost_history=tuple(history),
    )
    if not converged:
        raise NonConvergence(
            f"sensor {sensor.id}: yaw still moving by {delta:.2e} rad after {iterations} iterations",
            result=estimate,
            stage="yaw",
        )
    log.debug("yaw", "estimated", sensor=sensor.id,
              outputs={"yaw": theta, "residual": best_cost, "iterations": iterations, "matches": match_count})
    return estimate

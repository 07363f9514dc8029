"""
The three online estimators, each a damped step toward a fresh estimate.

  yaw      hand-eye pole cost of the window, searched near the current yaw
  rph      plane matching and ground angle terms over (z, roll, pitch)
  xyyaw    bounded quadratic program on distance-gated cross-sensor pairs
"""
from __future__ import annotations

import math
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import lsq_linear
from scipy.spatial.transform import Rotation

from calibration.joint_refine import ALL_AXES, HEIGHT_ROLL_PITCH, JointProblem, RefineWeights
from calibration.settings import CalibrationSettings, resolve
from calibration.yaw_estimator import euler_rotation_matrices, minimize_yaw
from features import FeatureFrame
from geometry import RigidTransform, TimedPose, blend, wrap_angle
from monitoring import get_run_logger
from monitoring.reason_codes import DEGENERATE_MOTION, EMPTY_MATCHES, NO_GROUND_OVERLAP, NO_POLE_PAIRS
from online.state import OnlineState

Batch = Mapping[str, FeatureFrame]


def _ingest(state: OnlineState, batch: Optional[Batch], ego: Sequence[TimedPose], cfg: CalibrationSettings):
    if batch:
        state.ingest(batch, ego, cfg)
    elif ego:
        state.add_ego(ego)


def window_travel(samples) -> float:
    """Vehicle distance covered by the increments of a hand-eye window (m)."""
    return float(sum(np.linalg.norm(s.increment.translation) for s in samples))


def online_update_yaw(state: OnlineState, batch: Optional[Batch] = None, ego: Sequence[TimedPose] = (),
                      settings: Optional[CalibrationSettings] = None) -> OnlineState:
    """
    Damped yaw update per sensor from the windowed temporal matches.

    The full current calibration (translation, roll, pitch) is used in the
    hand-eye prediction; only the yaw is searched, within yaw_search of its
    current value. Sensors without matches or with a stationary window keep
    their yaw and get a health flag.
    """
    cfg = resolve(settings)
    _ingest(state, batch, ego, cfg)
    on = cfg.online
    calib = state.calibration
    for sid in state.sensor_ids:
        samples = state.hand_eye_samples(sid)
        if not samples:
            state.flag(sid, EMPTY_MATCHES)
            continue
        if window_travel(samples) < on.min_travel:
            state.flag(sid, DEGENERATE_MOTION)
            continue
        problem = state.hand_eye_problem(sid)
        current = calib[sid]
        tilt = current.euler
        theta = tilt.yaw

        def cost(t: float) -> float:
            return problem.cost(current.with_euler(yaw=t))

        def grid_cost(thetas: np.ndarray) -> np.ndarray:
            rotations = euler_rotation_matrices(tilt.roll, tilt.pitch, thetas)
            return problem.batch_costs(rotations, np.tile(current.translation, (len(thetas), 1)))

        estimate, _ = minimize_yaw(cost, theta - on.yaw_search, theta + on.yaw_search, on.yaw_samples,
                                   cfg.yaw.tol, grid_cost)
        updated = wrap_angle(theta + on.alpha * wrap_angle(estimate - theta))
        calib = calib.with_transform(sid, current.with_euler(yaw=updated))
    state.set_calibration(calib)
    state.last_update["yaw"] = state.timestamp
    return state


def online_update_rph(state: OnlineState, batch: Optional[Batch] = None, ego: Sequence[TimedPose] = (),
                      settings: Optional[CalibrationSettings] = None) -> OnlineState:
    """
    Damped (z, roll, pitch) update from the windowed ground plane pairs.

    Pole matching is left out and every axis is regularized to the current
    calibration. Without plane pairs the state is left as is and flagged.
    """
    cfg = resolve(settings)
    _ingest(state, batch, ego, cfg)
    plane_pairs = state.windowed_plane_pairs()
    if not plane_pairs:
        state.flag_all(NO_GROUND_OVERLAP)
        return state

    r = cfg.refine
    calib = state.calibration
    problem = JointProblem(
        calib.sensor_ids, calib.transforms, [], plane_pairs,
        RefineWeights(reg=r.w_reg, pole=0.0, plane=r.w_plane, angle=r.w_angle),
        cfg.features.tangent_step, reg_axes=ALL_AXES, mask=HEIGHT_ROLL_PITCH,
    )
    estimate = problem.solve(calib, cfg.online.refine_iters, r.robust_scale).calibration
    covered = {sid for pair in plane_pairs for sid in pair.sensor_pair}
    for sid in calib.sensor_ids:
        if sid not in covered:
            state.flag(sid, NO_GROUND_OVERLAP)
            continue
        calib = calib.with_transform(sid, blend(calib[sid], estimate[sid], cfg.online.alpha))
    state.set_calibration(calib)
    state.last_update["rph"] = state.timestamp
    return state


def _pair_rows(state: OnlineState, gate: float):
    """
    Linearized base-point XY residuals of the windowed pairs that pass the gate.

    Returns (A, r) with r + A @ delta the residual after a step delta laid
    out as [dx, dy, dyaw] per sensor.
    """
    index = {sid: k for k, sid in enumerate(state.sensor_ids)}
    pairs = [p for p in state.windowed_pole_pairs() if p.sensor_pair[0] in index and p.sensor_pair[1] in index]
    if not pairs:
        return np.zeros((0, 3 * len(index))), np.zeros(0)

    calib = state.calibration
    rot = np.stack([calib[sid].rotation_matrix for sid in state.sensor_ids])
    trans = np.stack([calib[sid].translation for sid in state.sensor_ids])
    ia = np.array([index[p.sensor_pair[0]] for p in pairs])
    ib = np.array([index[p.sensor_pair[1]] for p in pairs])
    base_a = np.stack([p.pole_a.base for p in pairs])
    base_b = np.stack([p.pole_b.base for p in pairs])

    # rotated (not yet translated) base points; d/dyaw of a left yaw update is (-y, x)
    rot_a = np.einsum("nij,nj->ni", rot[ia], base_a)
    rot_b = np.einsum("nij,nj->ni", rot[ib], base_b)
    residual = (rot_a + trans[ia] - rot_b - trans[ib])[:, :2]
    keep = np.linalg.norm(residual, axis=1) <= gate
    residual, rot_a, rot_b, ia, ib = residual[keep], rot_a[keep], rot_b[keep], ia[keep], ib[keep]

    n = len(residual)
    A = np.zeros((2 * n, 3 * len(index)))
    rows = np.arange(n)
    for axis in (0, 1):
        A[2 * rows + axis, 3 * ia + axis] += 1.0
        A[2 * rows + axis, 3 * ib + axis] -= 1.0
    A[2 * rows, 3 * ia + 2] += -rot_a[:, 1]
    A[2 * rows + 1, 3 * ia + 2] += rot_a[:, 0]
    A[2 * rows, 3 * ib + 2] -= -rot_b[:, 1]
    A[2 * rows + 1, 3 * ib + 2] -= rot_b[:, 0]
    return A, residual.ravel()


def solve_xyyaw(state: OnlineState, settings: Optional[CalibrationSettings] = None) -> Optional[np.ndarray]:
    """
    Undamped (dx, dy, dyaw) per sensor, shape (S,3), or None without pairs.

    Minimizes |r + A d|^2 + rho_xy |dxy|^2 + rho_yaw |dyaw|^2 with x/y kept
    inside the vehicle box and |dyaw| <= gamma.
    """
    cfg = resolve(settings)
    A, r = _pair_rows(state, cfg.online.pair_gate)
    if len(r) == 0:
        return None
    count = len(state.sensor_ids)
    reg = np.tile([cfg.online.rho_xy, cfg.online.rho_xy, cfg.online.rho_yaw], count)
    system = np.vstack([A, np.diag(np.sqrt(reg))])
    target = np.concatenate([-r, np.zeros(3 * count)])

    (x_lo, x_hi), (y_lo, y_hi) = state.vehicle.x_bounds, state.vehicle.y_bounds
    lower, upper = np.empty(3 * count), np.empty(3 * count)
    for k, sid in enumerate(state.sensor_ids):
        x, y = state.calibration[sid].translation[:2]
        lower[3 * k:3 * k + 3] = [min(x_lo - x, 0.0), min(y_lo - y, 0.0), -cfg.mip.gamma]
        upper[3 * k:3 * k + 3] = [max(x_hi - x, 0.0), max(y_hi - y, 0.0), cfg.mip.gamma]
    result = lsq_linear(system, target, bounds=(lower, upper), method="bvls", tol=1e-12)
    return result.x.reshape(count, 3)


def online_update_xyyaw(state: OnlineState, batch: Optional[Batch] = None, ego: Sequence[TimedPose] = (),
                        settings: Optional[CalibrationSettings] = None) -> OnlineState:
    """Damped x/y/yaw alignment of all sensors on the windowed cross-sensor pole pairs."""
    cfg = resolve(settings)
    _ingest(state, batch, ego, cfg)
    delta = solve_xyyaw(state, cfg)
    if delta is None:
        state.flag_all(NO_POLE_PAIRS)
        return state
    alpha = cfg.online.alpha
    calib = state.calibration
    for k, sid in enumerate(state.sensor_ids):
        dx, dy, dyaw = alpha * delta[k]
        current = calib[sid]
        rotation = Rotation.from_euler("z", dyaw) * current.scipy_rotation
        translation = current.translation + np.array([dx, dy, 0.0])
        calib = calib.with_transform(sid, RigidTransform.from_rotation(rotation, translation))
    state.set_calibration(calib)
    state.last_update["xyyaw"] = state.timestamp
    get_run_logger().debug("online", "xyyaw", outputs={"max_step": float(np.abs(delta).max()) * alpha})
    return state


def yaw_residuals(state: OnlineState) -> dict[str, Optional[float]]:
    """Mean hand-eye pole distance per sensor under the current calibration."""
    out: dict[str, Optional[float]] = {}
    for sid in state.sensor_ids:
        problem = state.hand_eye_problem(sid)
        out[sid] = problem.cost(state.calibration[sid]) if len(problem) else None
    return out


def pair_residual(state: OnlineState, settings: Optional[CalibrationSettings] = None) -> Optional[float]:
    """RMS base-point XY mismatch of the gated window pairs."""
    cfg = resolve(settings)
    _, r = _pair_rows(state, cfg.online.pair_gate)
    return float(math.sqrt(np.mean(r ** 2))) if len(r) else None

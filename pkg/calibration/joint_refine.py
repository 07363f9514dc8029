"""
Stage 3: joint 6-DoF refinement of all calibrations and absolute height.

The cost has four count-normalized terms:

  regularization   w_r/S  * sum ||log(T_s) - log(T_s*)||^2  over the regularized axes
  pole matching    w_p/Np * sum D(T_A P_A, T_B P_B)
  plane matching   w_g/Ng * sum plane_plane_distance(T_A Pl_A, T_B Pl_B)
  ground angle     w_a/Ng * sum [ang(T_A Pl_A, G) + ang(T_B Pl_B, G)]

It is minimized by scipy trust-region least squares over tangent steps on
the manifold (additive translation, left exponential rotation update). The
unsquared terms enter through a pseudo-Huber loss, so the solver sees a
smooth function with the same minimizer on consistent data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from association import CandidatePair, OverlapWedge, VehicleGeometry, candidate_arrays
from calibration.models import CalibrationSet, Stage
from calibration.settings import CalibrationSettings, resolve
from errors import CalibrationError, InsufficientGround
from features import (
    GROUND_PLANE,
    FeatureFrame,
    FrameStreams,
    GroundPatch,
    Plane,
    fit_plane,
    pole_pair_residuals,
    transform_pole_array,
)
from geometry import RigidTransform
from monitoring import get_run_logger
from monitoring.reason_codes import NO_GROUND_OVERLAP, REFINE_NONCONVERGENCE

FD_STEP = 1e-6
REL_DECREASE_TOL = 1e-8
STEP_TOL = 1e-8
GRAD_TOL = 1e-12

OFFLINE_REG_AXES = (0, 1, 5)  # x, y, yaw
ALL_AXES = (0, 1, 2, 3, 4, 5)
HEIGHT_ROLL_PITCH = (2, 3, 4)  # z, rotation about vehicle x and y
NONCONVERGENCE_WARNING = "refine did not converge within the iteration limit"


@dataclass(frozen=True)
class PlanePairObservation:
    sensor_pair: tuple[str, str]
    plane_a: Plane
    plane_b: Plane
    timestamp: float
    weight: float = 1.0


@dataclass(frozen=True)
class RefineWeights:
    reg: float = 1.0
    pole: float = 1.0
    plane: float = 1.0
    angle: float = 1.0

    @classmethod
    def from_settings(cls, settings: CalibrationSettings) -> "RefineWeights":
        r = settings.refine
        return cls(r.w_reg, r.w_pole, r.w_plane, r.w_angle)


@dataclass
class RefineResult:
    calibration: CalibrationSet
    cost_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = True


def _frames_by_time(frames: Sequence) -> dict[float, np.ndarray]:
    out = {}
    for frame in frames:
        points = frame.ground_points if isinstance(frame, FeatureFrame) else frame.points
        out[frame.timestamp] = np.asarray(points, dtype=float).reshape(-1, 3)
    return out


def _wedge_points(points: np.ndarray, calib: RigidTransform, wedge: OverlapWedge, margin: float) -> np.ndarray:
    if len(points) == 0:
        return points
    vehicle = calib.apply(points)
    return points[wedge.contains(vehicle[:, :2], margin)]


def collect_plane_pairs(ground: FrameStreams | Mapping[str, Sequence[GroundPatch]], calib: CalibrationSet,
                        wedges: Sequence[OverlapWedge],
                        settings: Optional[CalibrationSettings] = None) -> list[PlanePairObservation]:
    """
    Plane pairs fitted to each pair's ground points inside the overlap wedge.

    A timestamp is kept when both fits pass the point-count and planarity
    checks and the vehicle-frame normals agree within plane_pair_max_angle.
    """
    cfg = resolve(settings)
    feat = cfg.features
    pairs: list[PlanePairObservation] = []
    for wedge in wedges:
        id_a, id_b = wedge.sensor_pair
        if id_a not in calib or id_b not in calib:
            continue
        by_time_a = _frames_by_time(ground.get(id_a, []))
        by_time_b = _frames_by_time(ground.get(id_b, []))
        for t in sorted(set(by_time_a) & set(by_time_b)):
            pts_a = _wedge_points(by_time_a[t], calib[id_a], wedge, cfg.association.wedge_margin)
            pts_b = _wedge_points(by_time_b[t], calib[id_b], wedge, cfg.association.wedge_margin)
            try:
                plane_a = fit_plane(pts_a, feat.min_plane_points, feat.planarity_ratio)
                plane_b = fit_plane(pts_b, feat.min_plane_points, feat.planarity_ratio)
            except CalibrationError:
                continue
            n_a = calib[id_a].rotation_matrix @ plane_a.normal
            n_b = calib[id_b].rotation_matrix @ plane_b.normal
            angle = math.acos(min(1.0, abs(float(np.dot(n_a, n_b)))))
            if angle > feat.plane_pair_max_angle:
                continue
            pairs.append(PlanePairObservation((id_a, id_b), plane_a, plane_b, t))
    return pairs


def _planes_arrays(planes: Sequence[Plane]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if not planes:
        empty = np.zeros((0, 3))
        return empty, empty, empty, empty
    return (
        np.stack([p.point for p in planes]),
        np.stack([p.normal for p in planes]),
        np.stack([p.tangent_u for p in planes]),
        np.stack([p.tangent_v for p in planes]),
    )


def ground_angle_residuals(normals: np.ndarray) -> np.ndarray:
    """
    2-vectors r with |r|^2 / 2 = 1 - |n_z| for unit normals (N,3).

    r = (n_x, n_y) * sqrt(2 / (1 + |n_z|)), sign-normalized so that n_z >= 0.
    """
    cos = normals @ GROUND_PLANE.normal
    n = normals * np.where(cos < 0, -1.0, 1.0)[:, None]
    scale = np.sqrt(2.0 / (1.0 + np.abs(cos)))
    return n[:, :2] * scale[:, None]


class JointProblem:
    """
    Residual model of the joint cost over the calibrations of `sensor_ids`.

    State is a pair (rotations (S,3,3), translations (S,3)). mask selects the
    tangent axes that are optimized, reg_axes those that are regularized.
    """

    def __init__(self, sensor_ids: Sequence[str], anchors: Mapping[str, RigidTransform],
                 pole_pairs: Sequence[CandidatePair], plane_pairs: Sequence[PlanePairObservation],
                 weights: RefineWeights = RefineWeights(), tangent_step: float = 1.0,
                 reg_axes: Sequence[int] = OFFLINE_REG_AXES, mask: Sequence[int] = ALL_AXES):
        self.sensor_ids = list(sensor_ids)
        self.index = {sid: k for k, sid in enumerate(self.sensor_ids)}
        self.weights = weights
        self.reg_axes = np.array(sorted(reg_axes), dtype=int)
        self.mask = np.array(sorted(mask), dtype=int)

        self.anchor_rot = np.stack([anchors[sid].rotation_matrix for sid in self.sensor_ids])
        self.anchor_trans = np.stack([anchors[sid].translation for sid in self.sensor_ids])

        pole_pairs = [p for p in pole_pairs if p.sensor_pair[0] in self.index and p.sensor_pair[1] in self.index]
        self.pole_a, self.pole_b = candidate_arrays(pole_pairs)
        self.pole_ia = np.array([self.index[p.sensor_pair[0]] for p in pole_pairs], dtype=int)
        self.pole_ib = np.array([self.index[p.sensor_pair[1]] for p in pole_pairs], dtype=int)

        plane_pairs = [p for p in plane_pairs if p.sensor_pair[0] in self.index and p.sensor_pair[1] in self.index]
        self.plane_ia = np.array([self.index[p.sensor_pair[0]] for p in plane_pairs], dtype=int)
        self.plane_ib = np.array([self.index[p.sensor_pair[1]] for p in plane_pairs], dtype=int)
        pa, na, ua, va = _planes_arrays([p.plane_a for p in plane_pairs])
        pb, nb, _, _ = _planes_arrays([p.plane_b for p in plane_pairs])
        self.tangent_a = np.stack([pa, pa + tangent_step * ua, pa + tangent_step * va], axis=1) \
            if len(pa) else np.zeros((0, 3, 3))
        self.normal_a, self.point_b, self.normal_b = na, pb, nb
        self.plane_weight = np.array([p.weight for p in plane_pairs], dtype=float)

    # --------------------
    # Sizes and coefficients
    # --------------------
    @property
    def num_sensors(self) -> int:
        return len(self.sensor_ids)

    @property
    def num_pole_pairs(self) -> int:
        return len(self.pole_a)

    @property
    def num_plane_pairs(self) -> int:
        return len(self.tangent_a)

    def _coefficients(self) -> tuple[float, float, float, float]:
        w = self.weights
        reg = w.reg / self.num_sensors if self.num_sensors and len(self.reg_axes) else 0.0
        pole = w.pole / self.num_pole_pairs if self.num_pole_pairs else 0.0
        plane = w.plane / self.num_plane_pairs if self.num_plane_pairs else 0.0
        angle = w.angle / self.num_plane_pairs if self.num_plane_pairs else 0.0
        return reg, pole, plane, angle

    # --------------------
    # State conversion
    # --------------------
    def state_from(self, calib: CalibrationSet | Mapping[str, RigidTransform]) -> tuple[np.ndarray, np.ndarray]:
        rot = np.stack([calib[sid].rotation_matrix for sid in self.sensor_ids])
        trans = np.stack([calib[sid].translation for sid in self.sensor_ids])
        return rot, trans

    def transforms_from(self, state: tuple[np.ndarray, np.ndarray]) -> dict[str, RigidTransform]:
        rot, trans = state
        return {
            sid: RigidTransform.from_rotation(Rotation.from_matrix(rot[k]), trans[k])
            for k, sid in enumerate(self.sensor_ids)
        }

    @staticmethod
    def retract(state: tuple[np.ndarray, np.ndarray], delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Apply a (S,6) tangent step: t + dt, exp(dw) R."""
        rot, trans = state
        delta = np.asarray(delta, dtype=float).reshape(-1, 6)
        new_rot = np.einsum("sij,sjk->sik", Rotation.from_rotvec(delta[:, 3:]).as_matrix(), rot)
        return new_rot, trans + delta[:, :3]

    # --------------------
    # Residual blocks
    # --------------------
    def residual_blocks(self, state: tuple[np.ndarray, np.ndarray]) -> dict[str, np.ndarray]:
        rot, trans = state
        blocks: dict[str, np.ndarray] = {}

        rel = np.einsum("sji,sjk->sik", self.anchor_rot, rot)
        log_rot = Rotation.from_matrix(rel).as_rotvec()
        reg = np.concatenate([trans - self.anchor_trans, log_rot], axis=1)
        blocks["reg"] = reg[:, self.reg_axes]

        if self.num_pole_pairs:
            mapped_a = transform_pole_array(rot[self.pole_ia], trans[self.pole_ia], self.pole_a)
            mapped_b = transform_pole_array(rot[self.pole_ib], trans[self.pole_ib], self.pole_b)
            blocks["pole"] = pole_pair_residuals(mapped_a, mapped_b)
        else:
            blocks["pole"] = np.zeros((0, 6))

        if self.num_plane_pairs:
            ra, rb = rot[self.plane_ia], rot[self.plane_ib]
            points_a = np.einsum("nij,nkj->nki", ra, self.tangent_a) + trans[self.plane_ia][:, None, :]
            point_b = np.einsum("nij,nj->ni", rb, self.point_b) + trans[self.plane_ib]
            normal_b = np.einsum("nij,nj->ni", rb, self.normal_b)
            normal_a = np.einsum("nij,nj->ni", ra, self.normal_a)
            blocks["plane"] = np.einsum("nki,ni->nk", points_a - point_b[:, None, :], normal_b)
            blocks["angle"] = np.concatenate([ground_angle_residuals(normal_a), ground_angle_residuals(normal_b)])
        else:
            blocks["plane"] = np.zeros((0, 3))
            blocks["angle"] = np.zeros((0, 2))
        return blocks

    def term_costs(self, state: tuple[np.ndarray, np.ndarray]) -> dict[str, float]:
        c_reg, c_pole, c_plane, c_angle = self._coefficients()
        blocks = self.residual_blocks(state)
        plane_w = self.plane_weight
        angle_w = np.concatenate([plane_w, plane_w]) if len(plane_w) else plane_w
        return {
            "reg": c_reg * float(np.sum(blocks["reg"] ** 2)),
            "pole": c_pole * float(np.sum(np.linalg.norm(blocks["pole"], axis=1))),
            "plane": c_plane * float(np.sum(plane_w * np.abs(blocks["plane"]).sum(axis=1))),
            "angle": c_angle * float(np.sum(angle_w * 0.5 * np.sum(blocks["angle"] ** 2, axis=1))),
        }

    def cost(self, state: tuple[np.ndarray, np.ndarray]) -> float:
        return float(sum(self.term_costs(state).values()))

    def _stacked(self, state: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        blocks = self.residual_blocks(state)
        return np.concatenate([blocks[k].ravel() for k in ("reg", "pole", "plane", "angle")])

    def jacobian(self, state: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        """Central-difference Jacobian of the stacked residuals w.r.t. the masked tangent axes."""
        columns = []
        for s in range(self.num_sensors):
            for axis in self.mask:
                step = np.zeros((self.num_sensors, 6))
                step[s, axis] = FD_STEP
                plus = self._stacked(self.retract(state, step))
                minus = self._stacked(self.retract(state, -step))
                columns.append((plus - minus) / (2.0 * FD_STEP))
        return np.column_stack(columns) if columns else np.zeros((0, 0))

    def _residual_gradient(self, state: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        """Derivative of the cost w.r.t. every stacked residual."""
        c_reg, c_pole, c_plane, c_angle = self._coefficients()
        blocks = self.residual_blocks(state)

        g_reg = 2.0 * c_reg * blocks["reg"].ravel()

        pole = blocks["pole"]
        norms = np.linalg.norm(pole, axis=1, keepdims=True)
        g_pole = (c_pole * pole / np.maximum(norms, 1e-15)).ravel()

        pw = self.plane_weight[:, None]
        g_plane = (c_plane * pw * np.sign(blocks["plane"])).ravel()

        angle = blocks["angle"]
        aw = np.concatenate([self.plane_weight, self.plane_weight])[:, None] if len(angle) else np.zeros((0, 1))
        g_angle = (c_angle * aw * angle).ravel()

        return np.concatenate([g_reg, g_pole, g_plane, g_angle])

    def gradient(self, state: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        """Gradient of the cost w.r.t. the masked tangent axes (flattened per sensor)."""
        return self.jacobian(state).T @ self._residual_gradient(state)

    def _expand(self, reduced: np.ndarray) -> np.ndarray:
        full = np.zeros((self.num_sensors, 6))
        full[:, self.mask] = reduced.reshape(self.num_sensors, len(self.mask))
        return full

    def _robust_layout(self, robust_scale: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Per-element multipliers of the stacked residuals, pseudo-Huber scales
        (0 = plain square) and the robust mask.

        Squared terms are scaled so that half the sum of squares equals their
        cost. The unsquared pole and plane terms get a pseudo-Huber loss whose
        linear tail matches their cost away from zero.
        """
        c_reg, c_pole, c_plane, c_angle = self._coefficients()
        s = robust_scale
        plane_w = np.repeat(self.plane_weight, 3)
        angle_w = np.repeat(np.concatenate([self.plane_weight, self.plane_weight]), 2)
        n_reg = self.num_sensors * len(self.reg_axes)
        n_pole = 6 * self.num_pole_pairs
        multiplier = np.concatenate([
            np.full(n_reg, math.sqrt(2.0 * c_reg)),
            np.full(n_pole, math.sqrt(c_pole / s)),
            np.sqrt(c_plane * plane_w / s),
            np.sqrt(c_angle * angle_w),
        ])
        scale = np.concatenate([
            np.zeros(n_reg),
            np.full(n_pole, math.sqrt(c_pole * s)),
            np.sqrt(c_plane * plane_w * s),
            np.zeros(len(angle_w)),
        ])
        robust = scale > 0
        return multiplier, scale, robust

    def _box_bounds(self, trans: np.ndarray, box) -> tuple[np.ndarray, np.ndarray]:
        lower = np.full((self.num_sensors, len(self.mask)), -np.inf)
        upper = np.full((self.num_sensors, len(self.mask)), np.inf)
        if box is not None:
            for k, axis in enumerate(self.mask):
                if axis < 2:
                    lo, hi = box[axis]
                    lower[:, k] = lo - trans[:, axis]
                    upper[:, k] = hi - trans[:, axis]
        return lower.ravel(), upper.ravel()

    def solve(self, calib: CalibrationSet, max_iters: int = 100, robust_scale: float = 0.05,
              box: Optional[tuple[tuple[float, float], tuple[float, float]]] = None) -> RefineResult:
        """
        Trust-region least squares over the masked tangent axes around calib.

        box holds (x_bounds, y_bounds) for the sensor translations; a start
        outside the box is clipped into it first. Stops on relative cost
        decrease or step size below 1e-8, or after max_iters evaluations.
        """
        rot, trans = self.state_from(calib)
        if box is not None:
            trans = trans.copy()
            for axis in (0, 1):
                if axis in self.mask:
                    trans[:, axis] = np.clip(trans[:, axis], *box[axis])
        start = (rot, trans)
        history = [self.cost(start)]

        multiplier, scale, robust = self._robust_layout(robust_scale)
        if len(multiplier) == 0 or len(self.mask) == 0:
            result = calib.replace(transforms={**calib.transforms, **self.transforms_from(start)}, stage=Stage.FULL)
            return RefineResult(result, history, 0, True)

        scale_sq = np.where(robust, scale, 1.0) ** 2

        def residuals(x: np.ndarray) -> np.ndarray:
            return multiplier * self._stacked(self.retract(start, self._expand(x)))

        def loss(z: np.ndarray) -> np.ndarray:
            rho = np.vstack([z, np.ones_like(z), np.zeros_like(z)])
            root = np.sqrt(1.0 + z[robust] / scale_sq[robust])
            rho[0, robust] = 2.0 * scale_sq[robust] * (root - 1.0)
            rho[1, robust] = 1.0 / root
            rho[2, robust] = -0.5 / (scale_sq[robust] * root ** 3)
            return rho

        lower, upper = self._box_bounds(trans, box)
        fit = least_squares(residuals, np.zeros(len(lower)), jac="2-point", bounds=(lower, upper),
                            method="trf", loss=loss, ftol=REL_DECREASE_TOL, xtol=STEP_TOL,
                            gtol=GRAD_TOL, max_nfev=max_iters)
        state = self.retract(start, self._expand(fit.x))
        history.append(self.cost(state))
        result = calib.replace(transforms={**calib.transforms, **self.transforms_from(state)}, stage=Stage.FULL)
        return RefineResult(result, history, int(fit.nfev), bool(fit.status > 0))


def refine_detailed(calib_init: CalibrationSet, pole_pairs: Sequence[CandidatePair],
                    plane_pairs: Sequence[PlanePairObservation],
                    settings: Optional[CalibrationSettings] = None,
                    anchors: Optional[CalibrationSet] = None,
                    reg_axes: Sequence[int] = OFFLINE_REG_AXES,
                    mask: Sequence[int] = ALL_AXES,
                    weights: Optional[RefineWeights] = None,
                    vehicle: Optional[VehicleGeometry] = None) -> RefineResult:
    """
    Run the joint refinement and return the calibration with its cost history.

    With a vehicle the sensor x/y stay inside its footprint box.
    """
    cfg = resolve(settings)
    problem = JointProblem(
        calib_init.sensor_ids,
        (anchors or calib_init).transforms,
        pole_pairs,
        plane_pairs,
        weights or RefineWeights.from_settings(cfg),
        cfg.features.tangent_step,
        reg_axes,
        mask,
    )
    box = (vehicle.x_bounds, vehicle.y_bounds) if vehicle is not None else None
    return problem.solve(calib_init, cfg.refine.max_iters, cfg.refine.robust_scale, box)


def refine(calib_init: CalibrationSet, pole_pairs: Sequence[CandidatePair],
           plane_pairs: Sequence[PlanePairObservation],
           settings: Optional[CalibrationSettings] = None,
           anchors: Optional[CalibrationSet] = None,
           vehicle: Optional[VehicleGeometry] = None) -> CalibrationSet:
    """
    Refine all 6-DoF calibrations; the result has stage FULL.

    Without convergence the best iterate is returned with a warning attached.
    """
    result = refine_detailed(calib_init, pole_pairs, plane_pairs, settings, anchors, vehicle=vehicle)
    get_run_logger().debug("refine", "finished", outputs={
        "iterations": result.iterations,
        "initial_cost": result.cost_history[0],
        "final_cost": result.cost_history[-1],
        "pole_pairs": len(pole_pairs),
        "plane_pairs": len(plane_pairs),
    })
    if not result.converged:
        get_run_logger().warn("refine", "not_converged", reason_code=REFINE_NONCONVERGENCE,
                              outputs={"iterations": result.iterations})
        return result.calibration.with_warning(NONCONVERGENCE_WARNING)
    return result.calibration


def joint_cost(calib: CalibrationSet, anchors: CalibrationSet, pole_pairs: Sequence[CandidatePair],
               plane_pairs: Sequence[PlanePairObservation], weights: RefineWeights = RefineWeights(),
               tangent_step: float = 1.0, reg_axes: Sequence[int] = OFFLINE_REG_AXES) -> float:
    """Value of the normalized four-term cost at calib."""
    problem = JointProblem(calib.sensor_ids, anchors.transforms, pole_pairs, plane_pairs,
                           weights, tangent_step, reg_axes)
    return problem.cost(problem.state_from(calib))


def sensor_heights(patches: Sequence, settings: Optional[CalibrationSettings] = None) -> list[float]:
    """Height of the sensor origin above each fitted ground patch (sensor frame)."""
    cfg = resolve(settings)
    heights = []
    for patch in patches:
        points = patch.ground_points if isinstance(patch, FeatureFrame) else patch.points
        try:
            plane = fit_plane(points, cfg.features.min_plane_points, cfg.features.planarity_ratio)
        except CalibrationError:
            continue
        heights.append(abs(float(np.dot(plane.normal, plane.point))))
    return heights


def anchor_absolute_height(calib: CalibrationSet, ground: Sequence,
                           settings: Optional[CalibrationSettings] = None,
                           anchor_sensor: Optional[str] = None) -> CalibrationSet:
    """
    Shift every sensor's z so the anchor sensor sits at its measured height.

    The height is the median distance from the anchor origin to planes fitted
    to its full-FOV ground patches.

    Raises:
        InsufficientGround: no patch of the anchor sensor yields a plane
    """
    cfg = resolve(settings)
    anchor = anchor_sensor or cfg.refine.anchor_sensor or calib.sensor_ids[0]
    if anchor not in calib:
        raise InsufficientGround(f"anchor sensor {anchor} is not calibrated", stage="refine")
    heights = sensor_heights(ground, cfg)
    if not heights:
        get_run_logger().warn("refine", "anchor_height_unavailable", sensor=anchor, reason_code=NO_GROUND_OVERLAP)
        raise InsufficientGround(f"no usable ground patch for anchor sensor {anchor}", stage="refine")
    height = float(np.median(heights))
    shift = height - float(calib[anchor].translation[2])
    get_run_logger().debug("refine", "anchor_height", sensor=anchor,
                           outputs={"height": height, "shift": shift, "patches": len(heights)})
    return calib.shifted(np.array([0.0, 0.0, shift]))

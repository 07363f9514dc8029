"""
Synthetic urban scenes: pole landmarks, a flat ground, a vehicle trajectory
and a rig whose true mounting poses may change over time.

Everything is derived from one integer seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from association import SensorConfig, VehicleGeometry
from calibration.models import CalibrationSet, Stage
from errors import InvalidParams, OutOfRange
from features import FrameTag, Pole
from geometry import RigidTransform, TimedPose
from simulator.rigs import Rig, four_sensor_rig


@dataclass(frozen=True)
class ScenarioParams:
    """
    Attributes:
        area_size: side of the square world (m) the poles are drawn in
        pole_density: expected poles per square meter
        pole_height: (min, max) pole height (m)
        road_half_width: poles closer than this to the route are pushed to the curb (m)
        frames: number of timestamps
        rate: frame frequency (Hz)
        speed: vehicle speed (m/s)
        turns: rounded-rectangle loop when True, straight line otherwise
        loop_half_length / loop_half_width / corner_radius: loop shape (m)
        ground_ranges: (min, max, step) ranges of the ground grid (m)
        ground_azimuth_step: azimuth spacing of the ground grid (rad)
        min_range: poles closer than this to a sensor are not detected (m)
    """
    area_size: float = 200.0
    pole_density: float = 0.02
    pole_height: tuple[float, float] = (3.0, 6.0)
    road_half_width: float = 4.0
    frames: int = 300
    rate: float = 10.0
    speed: float = 5.0
    turns: bool = True
    loop_half_length: float = 30.0
    loop_half_width: float = 15.0
    corner_radius: float = 10.0
    ground_ranges: tuple[float, float, float] = (3.0, 12.0, 1.5)
    ground_azimuth_step: float = math.radians(3.0)
    min_range: float = 1.0

    def validate(self):
        if self.pole_density <= 0:
            raise InvalidParams("pole density must be positive", stage="simulator")
        if self.area_size <= 0:
            raise InvalidParams("area size must be positive", stage="simulator")
        if self.frames < 2:
            raise InvalidParams("a scenario needs at least two frames", stage="simulator")
        if self.rate <= 0 or self.speed < 0:
            raise InvalidParams("rate must be positive and speed non-negative", stage="simulator")
        if self.pole_height[0] <= 0 or self.pole_height[1] < self.pole_height[0]:
            raise InvalidParams(f"invalid pole height range {self.pole_height}", stage="simulator")
        if self.corner_radius <= 0 or self.loop_half_length < 0 or self.loop_half_width < 0:
            raise InvalidParams("invalid loop shape", stage="simulator")
        lo, hi, step = self.ground_ranges
        if lo <= 0 or hi < lo or step <= 0 or self.ground_azimuth_step <= 0:
            raise InvalidParams(f"invalid ground grid {self.ground_ranges}", stage="simulator")

    @property
    def duration(self) -> float:
        return (self.frames - 1) / self.rate

    @property
    def timestamps(self) -> np.ndarray:
        return np.arange(self.frames) / self.rate


@dataclass(frozen=True)
class MountChange:
    """True calibration of one sensor from `time` onward."""
    time: float
    transform: RigidTransform


@dataclass(frozen=True)
class Scenario:
    seed: int
    params: ScenarioParams
    poles_world: np.ndarray  # (N, 2, 3) base/top
    trajectory: tuple[TimedPose, ...]
    rig: Rig
    changes: dict[str, tuple[MountChange, ...]] = field(default_factory=dict)

    @property
    def sensors(self) -> tuple[SensorConfig, ...]:
        return self.rig.sensors

    @property
    def vehicle(self) -> VehicleGeometry:
        return self.rig.vehicle

    @property
    def rate(self) -> float:
        return self.params.rate

    @property
    def poles(self) -> list[Pole]:
        return [Pole(p[0], p[1], FrameTag.WORLD) for p in self.poles_world]

    def mount(self, sensor_id: str, t: float) -> RigidTransform:
        """True T^V_S of a sensor at time t."""
        current = self.rig.truth[sensor_id]
        for change in self.changes.get(sensor_id, ()):
            if change.time <= t:
                current = change.transform
        return current


def _segments(params: ScenarioParams) -> list[tuple[str, float]]:
    """Counter-clockwise loop as (kind, length) pieces, starting at the bottom straight."""
    a, b, r = params.loop_half_length, params.loop_half_width, params.corner_radius
    quarter = 0.5 * math.pi * r
    return [
        ("straight", 2 * a), ("arc", quarter),
        ("straight", 2 * b), ("arc", quarter),
        ("straight", 2 * a), ("arc", quarter),
        ("straight", 2 * b), ("arc", quarter),
    ]


def route_pose(params: ScenarioParams, s: float) -> tuple[float, float, float]:
    """(x, y, heading) at arc length s along the route."""
    if not params.turns:
        return s - 0.5 * params.speed * params.duration, 0.0, 0.0

    r = params.corner_radius
    pieces = _segments(params)
    perimeter = sum(length for _, length in pieces)
    s = s % perimeter
    x, y, heading = -params.loop_half_length, -(params.loop_half_width + r), 0.0
    for kind, length in pieces:
        step = min(s, length)
        if kind == "straight":
            x += step * math.cos(heading)
            y += step * math.sin(heading)
        else:
            # left turn about the center on the left-hand side
            cx, cy = x - r * math.sin(heading), y + r * math.cos(heading)
            heading += step / r
            x, y = cx + r * math.sin(heading), cy - r * math.cos(heading)
        s -= step
        if s <= 0:
            break
    return x, y, heading


def _trajectory(params: ScenarioParams) -> tuple[TimedPose, ...]:
    poses = []
    for t in params.timestamps:
        x, y, heading = route_pose(params, params.speed * t)
        poses.append(TimedPose(float(t), RigidTransform.from_yaw(heading, (x, y, 0.0))))
    return tuple(poses)


def _route_polyline(params: ScenarioParams, spacing: float = 0.5) -> np.ndarray:
    if params.turns:
        total = sum(length for _, length in _segments(params))
    else:
        total = params.speed * params.duration
    samples = np.arange(0.0, total + spacing, spacing)
    return np.array([route_pose(params, s)[:2] for s in samples])


def _place_poles(params: ScenarioParams, rng: np.random.Generator) -> np.ndarray:
    """Poisson number of poles, uniform over the area; those on the road move to the curb."""
    count = int(rng.poisson(params.pole_density * params.area_size ** 2))
    half = params.area_size / 2
    xy = rng.uniform(-half, half, size=(count, 2))
    heights = rng.uniform(params.pole_height[0], params.pole_height[1], size=count)

    route = _route_polyline(params)
    for k in range(count):
        offsets = xy[k] - route
        dist = np.linalg.norm(offsets, axis=1)
        nearest = int(np.argmin(dist))
        if dist[nearest] < params.road_half_width:
            direction = offsets[nearest] / dist[nearest] if dist[nearest] > 1e-9 else np.array([0.0, 1.0])
            xy[k] = route[nearest] + direction * params.road_half_width

    poles = np.zeros((count, 2, 3))
    poles[:, :, :2] = xy[:, None, :]
    poles[:, 1, 2] = heights
    return poles


def generate_scenario(params: Optional[ScenarioParams] = None, seed: int = 0,
                      rig: Optional[Rig] = None) -> Scenario:
    """
    Build a reproducible scenario.

    Raises:
        InvalidParams: parameters out of range
    """
    params = params or ScenarioParams()
    params.validate()
    rng = np.random.default_rng(seed)
    return Scenario(
        seed=seed,
        params=params,
        poles_world=_place_poles(params, rng),
        trajectory=_trajectory(params),
        rig=rig or four_sensor_rig(),
    )


def perturb_mount(scn: Scenario, sensor_id: str, delta: RigidTransform, at_time: float) -> Scenario:
    """
    Change one sensor's true mount from at_time onward.

    The rotation of delta is applied about the sensor origin in vehicle axes
    and its translation is added in the vehicle frame.

    Raises:
        OutOfRange: at_time outside the trajectory span
        InvalidParams: unknown sensor
    """
    if sensor_id not in scn.rig.truth:
        raise InvalidParams(f"unknown sensor {sensor_id}", stage="simulator")
    start, end = scn.trajectory[0].timestamp, scn.trajectory[-1].timestamp
    if not (start <= at_time <= end):
        raise OutOfRange(f"perturbation time {at_time} outside [{start}, {end}]", stage="simulator")
    before = scn.mount(sensor_id, at_time)
    after = RigidTransform.from_rotation(
        delta.scipy_rotation * before.scipy_rotation, before.translation + delta.translation
    )
    changes = dict(scn.changes)
    history = tuple(c for c in changes.get(sensor_id, ()) if c.time < at_time)
    changes[sensor_id] = tuple(sorted(history + (MountChange(at_time, after),), key=lambda c: c.time))
    return replace(scn, changes=changes)


def true_calibration(scn: Scenario, t: Optional[float] = None) -> CalibrationSet:
    """Ground-truth calibration set at time t (start of the scenario by default)."""
    t = scn.trajectory[0].timestamp if t is None else t
    return CalibrationSet({s.id: scn.mount(s.id, t) for s in scn.sensors}, Stage.FULL, t)


def random_rotation(rng: np.random.Generator, max_angle: float) -> Rotation:
    """Rotation about a uniformly random axis by an angle uniform in [0, max_angle]."""
    axis = rng.normal(size=3)
    axis /= max(np.linalg.norm(axis), 1e-12)
    return Rotation.from_rotvec(axis * rng.uniform(0.0, max_angle))

"""Forward model: world poles and flat ground seen from each sensor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

import config
from features import FeatureFrame, FrameStreams, FrameTag, Pole
from geometry import TimedPose, compose
from simulator.scenario import Scenario

SIDEWALK_HEIGHT = 0.15  # m
SIDEWALK_FRACTION = 0.2  # share of frames with a raised far patch
SIDEWALK_RANGE = 8.0  # m, ground beyond this range is lifted in those frames


@dataclass(frozen=True)
class RenderOptions:
    dropout: bool = config.SIM_DROPOUT_ENABLED
    dropout_prob: float = config.SIM_DROPOUT_PROB
    sidewalks: bool = False


@dataclass(frozen=True)
class Rendering:
    ego: list[TimedPose]
    frames: FrameStreams


def _azimuth(points: np.ndarray) -> np.ndarray:
    return np.arctan2(points[..., 1], points[..., 0])


def visible_poles(poles_sensor: np.ndarray, fov: float, max_range: float, min_range: float) -> np.ndarray:
    """Mask of sensor-frame poles (N,2,3) whose base lies inside the fov wedge and range band."""
    if len(poles_sensor) == 0:
        return np.zeros(0, dtype=bool)
    base = poles_sensor[:, 0]
    rng = np.linalg.norm(base[:, :2], axis=1)
    in_fov = np.abs(_azimuth(base)) <= fov / 2 + 1e-12
    return in_fov & (rng <= max_range) & (rng >= min_range)


def ground_grid(scn: Scenario, sensor_index: int, t: float) -> np.ndarray:
    """
    Ground points on z = 0 (vehicle frame) on a polar grid around the sensor,
    restricted to its fov, returned in the sensor frame.
    """
    sensor = scn.sensors[sensor_index]
    mount = scn.mount(sensor.id, t)
    lo, hi, step = scn.params.ground_ranges
    ranges = np.arange(lo, hi + 1e-9, step)
    half = sensor.fov_angle / 2
    count = max(int(np.floor(2 * half / scn.params.ground_azimuth_step)) + 1, 2)
    azimuths = mount.yaw + np.linspace(-half, half, count)
    rr, aa = np.meshgrid(ranges, azimuths, indexing="ij")
    points = np.zeros((rr.size, 3))
    points[:, 0] = mount.translation[0] + (rr * np.cos(aa)).ravel()
    points[:, 1] = mount.translation[1] + (rr * np.sin(aa)).ravel()
    return mount.inverse().apply(points)


def render_frames(scn: Scenario, options: Optional[RenderOptions] = None) -> Rendering:
    """
    Per-sensor feature frames at every trajectory timestamp plus the ego stream.

    Poles are kept when their base falls inside the sensor's fov wedge and
    range band; ground points come from a fixed polar grid on the flat ground.
    """
    options = options or RenderOptions()
    rng = np.random.default_rng([scn.seed, 1])
    frames: FrameStreams = {s.id: [] for s in scn.sensors}

    for sample in scn.trajectory:
        t = sample.timestamp
        for k, sensor in enumerate(scn.sensors):
            world_from_sensor = compose(sample.pose, scn.mount(sensor.id, t))
            sensor_from_world = world_from_sensor.inverse()
            poles = scn.poles_world @ sensor_from_world.rotation_matrix.T + sensor_from_world.translation
            keep = visible_poles(poles, sensor.fov_angle, sensor.max_range, scn.params.min_range)
            if options.dropout:
                keep &= rng.random(len(poles)) >= options.dropout_prob
            ground = ground_grid(scn, k, t)
            if options.sidewalks and rng.random() < SIDEWALK_FRACTION:
                far = np.linalg.norm(ground[:, :2], axis=1) > SIDEWALK_RANGE
                lifted = scn.mount(sensor.id, t).apply(ground[far]) + np.array([0.0, 0.0, SIDEWALK_HEIGHT])
                ground[far] = scn.mount(sensor.id, t).inverse().apply(lifted)
            frames[sensor.id].append(FeatureFrame(
                sensor_id=sensor.id,
                timestamp=t,
                poles=tuple(Pole(p[0], p[1], FrameTag.SENSOR) for p in poles[keep]),
                ground_points=ground,
            ))
    return Rendering(ego=list(scn.trajectory), frames=frames)

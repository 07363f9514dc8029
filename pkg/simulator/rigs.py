"""Default sensor rigs with their ground-truth mounting poses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from association import SensorConfig, VehicleGeometry
from calibration.models import CalibrationSet, Stage
from errors import InvalidParams
from geometry import RigidTransform


@dataclass(frozen=True)
class Rig:
    """Sensors, their true calibrations T^V_S and the vehicle box they sit on."""
    sensors: tuple[SensorConfig, ...]
    truth: dict[str, RigidTransform]
    vehicle: VehicleGeometry = field(default_factory=VehicleGeometry)

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        missing = [s.id for s in self.sensors if s.id not in self.truth]
        if missing:
            raise InvalidParams(f"rig has no true pose for sensors {missing}")

    @property
    def sensor_ids(self) -> list[str]:
        return [s.id for s in self.sensors]

    def calibration(self) -> CalibrationSet:
        return CalibrationSet({s.id: self.truth[s.id] for s in self.sensors}, Stage.FULL)


def four_sensor_rig(vehicle: VehicleGeometry | None = None, fov_deg: float = 150.0,
                    max_range: float = 30.0) -> Rig:
    """
    One sensor near each vehicle corner looking diagonally outwards.

    Neighbors are 90 deg apart, so any fov above 90 deg gives overlap. Mounts
    carry small roll/pitch and different heights.
    """
    vehicle = vehicle or VehicleGeometry()
    x_lo, x_hi = vehicle.x_bounds
    y_lo, y_hi = vehicle.y_bounds
    inset = 0.2
    layout = [
        ("front_left", x_hi - inset, y_hi - inset, 1.85, 45.0, 0.8, -0.5),
        ("rear_left", x_lo + inset, y_hi - inset, 1.70, 135.0, -0.6, 0.4),
        ("rear_right", x_lo + inset, y_lo + inset, 1.75, -135.0, 0.5, 0.7),
        ("front_right", x_hi - inset, y_lo + inset, 1.90, -45.0, -0.4, -0.6),
    ]
    sensors, truth = [], {}
    for sid, x, y, z, yaw_deg, roll_deg, pitch_deg in layout:
        sensors.append(SensorConfig(sid, math.radians(fov_deg), max_range))
        truth[sid] = RigidTransform.from_euler(
            math.radians(roll_deg), math.radians(pitch_deg), math.radians(yaw_deg), (x, y, z)
        )
    return Rig(tuple(sensors), truth, vehicle)


def _box_exit(vehicle: VehicleGeometry, angle: float, inset: float) -> tuple[float, float]:
    """Point where a ray from the box center at the given angle leaves the (inset) box."""
    x_lo, x_hi = vehicle.x_bounds
    y_lo, y_hi = vehicle.y_bounds
    cx, cy = (x_lo + x_hi) / 2, (y_lo + y_hi) / 2
    hx, hy = (x_hi - x_lo) / 2 - inset, (y_hi - y_lo) / 2 - inset
    c, s = math.cos(angle), math.sin(angle)
    scale = min(hx / abs(c) if abs(c) > 1e-12 else math.inf, hy / abs(s) if abs(s) > 1e-12 else math.inf)
    return cx + scale * c, cy + scale * s


def ring_rig(count: int = 8, fov_deg: float = 60.0, vehicle: VehicleGeometry | None = None,
             max_range: float = 30.0, height: float = 1.9) -> Rig:
    """
    count sensors evenly spaced in yaw around the vehicle box.

    With 8 sensors of 60 deg each, neighbors share a 15 deg wedge.
    """
    if count < 2:
        raise InvalidParams("a ring rig needs at least two sensors", stage="simulator")
    if fov_deg * count <= 360.0:
        raise InvalidParams("ring sensors must overlap their neighbors", stage="simulator")
    vehicle = vehicle or VehicleGeometry()
    sensors, truth = [], {}
    for k in range(count):
        yaw = 2.0 * math.pi * k / count
        sid = f"s{k}"
        x, y = _box_exit(vehicle, yaw, inset=0.15)
        # alternating small tilts and height offsets keep the problem non-trivial
        sign = 1.0 if k % 2 == 0 else -1.0
        sensors.append(SensorConfig(sid, math.radians(fov_deg), max_range))
        truth[sid] = RigidTransform.from_euler(
            math.radians(0.5 * sign), math.radians(-0.4 * sign), yaw, (x, y, height + 0.05 * sign)
        )
    return Rig(tuple(sensors), truth, vehicle)


RIGS = {
    "four": four_sensor_rig,
    "ring": ring_rig,
}


def make_rig(name: str) -> Rig:
    try:
        return RIGS[name]()
    except KeyError:
        raise InvalidParams(f"unknown rig '{name}', expected one of {sorted(RIGS)}", stage="simulator")

"""Static rig description: per-sensor field of view and vehicle dimensions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import config
from errors import InvalidParams


@dataclass(frozen=True)
class SensorConfig:
    """
    Static information about one range sensor.

    Attributes:
        id: Sensor identifier
        fov_angle: Horizontal field of view (radians), 0 < fov <= 2*pi
        max_range: Maximum detection range (meters)
        yaw_guess: Optional prior mounting yaw (radians)
        roll_guess: Roll used when building yaw-only calibrations (radians)
        pitch_guess: Pitch used when building yaw-only calibrations (radians)
    """
    id: str
    fov_angle: float
    max_range: float = config.SENSOR_MAX_RANGE
    yaw_guess: Optional[float] = None
    roll_guess: float = 0.0
    pitch_guess: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.fov_angle <= 2.0 * math.pi + 1e-12):
            raise InvalidParams(f"sensor {self.id}: fov_angle {self.fov_angle} outside (0, 2*pi]")
        if self.max_range <= 0:
            raise InvalidParams(f"sensor {self.id}: max_range must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SensorConfig":
        return cls(
            id=str(data["id"]),
            fov_angle=float(data["fov_angle"]),
            max_range=float(data.get("max_range", config.SENSOR_MAX_RANGE)),
            yaw_guess=None if data.get("yaw_guess") is None else float(data["yaw_guess"]),
            roll_guess=float(data.get("roll_guess", 0.0)),
            pitch_guess=float(data.get("pitch_guess", 0.0)),
        )


@dataclass(frozen=True)
class VehicleGeometry:
    """Vehicle box used to bound sensor XY positions (vehicle frame at the rear axle)."""
    length: float = config.VEHICLE_LENGTH
    width: float = config.VEHICLE_WIDTH
    offset_x: float = config.VEHICLE_OFFSET_X
    offset_y: float = config.VEHICLE_OFFSET_Y

    @property
    def x_bounds(self) -> tuple[float, float]:
        return (-self.length / 2 + self.offset_x, self.length / 2 + self.offset_x)

    @property
    def y_bounds(self) -> tuple[float, float]:
        return (-self.width / 2 + self.offset_y, self.width / 2 + self.offset_y)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.length, self.width)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "VehicleGeometry":
        return cls(
            length=float(data.get("length", config.VEHICLE_LENGTH)),
            width=float(data.get("width", config.VEHICLE_WIDTH)),
            offset_x=float(data.get("offset_x", config.VEHICLE_OFFSET_X)),
            offset_y=float(data.get("offset_y", config.VEHICLE_OFFSET_Y)),
        )

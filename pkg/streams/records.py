"""
Line-delimited stream record schemas.

One JSON object per line, discriminated by its "type" field. Angles are
radians, lengths meters, times seconds on the stream clock. Every float must
be finite.
"""
from __future__ import annotations

import math
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator

import config
from association import SensorConfig, VehicleGeometry
from features import FeatureFrame, FrameTag, Pole
from geometry import RigidTransform, TimedPose

Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]


def _check_finite(values) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v!r}")


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class HeaderRecord(_Record):
    type: Literal["header"] = "header"
    version: int = config.STREAM_FORMAT_VERSION
    producer: str = ""
    seed: Optional[int] = None

    @field_validator("version")
    @classmethod
    def validate_version(cls, v):
        if v != config.STREAM_FORMAT_VERSION:
            raise ValueError(f"unsupported stream format version {v}, expected {config.STREAM_FORMAT_VERSION}")
        return v


class SensorRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    fov_angle: float = Field(gt=0.0, le=2.0 * math.pi + 1e-12)
    max_range: float = Field(default=config.SENSOR_MAX_RANGE, gt=0.0)
    yaw_guess: Optional[float] = None
    roll_guess: float = 0.0
    pitch_guess: float = 0.0

    def to_sensor(self) -> SensorConfig:
        return SensorConfig.from_dict(self.model_dump())


class VehicleRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    length: float = Field(default=config.VEHICLE_LENGTH, gt=0.0)
    width: float = Field(default=config.VEHICLE_WIDTH, gt=0.0)
    offset_x: float = config.VEHICLE_OFFSET_X
    offset_y: float = config.VEHICLE_OFFSET_Y

    def to_vehicle(self) -> VehicleGeometry:
        return VehicleGeometry.from_dict(self.model_dump())


class ConfigRecord(_Record):
    type: Literal["config"] = "config"
    sensors: list[SensorRecord]
    vehicle: VehicleRecord = Field(default_factory=VehicleRecord)

    @field_validator("sensors")
    @classmethod
    def validate_unique_ids(cls, v):
        ids = [s.id for s in v]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate sensor ids in {ids}")
        return v


class PoseRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    translation: Vec3
    rotation: Quat  # (w, x, y, z)

    @field_validator("translation", "rotation")
    @classmethod
    def validate_finite(cls, v):
        _check_finite(v)
        return v

    def to_transform(self) -> RigidTransform:
        return RigidTransform(self.translation, self.rotation)


class EgoRecord(_Record):
    type: Literal["ego"] = "ego"
    t: float
    pose: PoseRecord

    @field_validator("t")
    @classmethod
    def validate_time(cls, v):
        _check_finite([v])
        return v

    def to_pose(self) -> TimedPose:
        return TimedPose(self.t, self.pose.to_transform())


class PoleRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    base: Vec3
    top: Vec3

    @field_validator("base", "top")
    @classmethod
    def validate_finite(cls, v):
        _check_finite(v)
        return v


class FrameRecord(_Record):
    type: Literal["frame"] = "frame"
    t: float
    sensor_id: str
    poles: list[PoleRecord] = Field(default_factory=list)
    ground_points: list[Vec3] = Field(default_factory=list)

    @field_validator("t")
    @classmethod
    def validate_time(cls, v):
        _check_finite([v])
        return v

    @field_validator("ground_points")
    @classmethod
    def validate_points(cls, v):
        for point in v:
            _check_finite(point)
        return v

    def to_frame(self, timestamp: Optional[float] = None) -> FeatureFrame:
        return FeatureFrame(
            sensor_id=self.sensor_id,
            timestamp=self.t if timestamp is None else timestamp,
            poles=tuple(Pole(p.base, p.top, FrameTag.SENSOR) for p in self.poles),
            ground_points=self.ground_points,
        )


StreamRecord = Annotated[
    Union[HeaderRecord, ConfigRecord, EgoRecord, FrameRecord],
    Field(discriminator="type"),
]

RECORD_ADAPTER: TypeAdapter = TypeAdapter(StreamRecord)


# --------------------
# Domain object -> record
# --------------------
def pose_record(pose: TimedPose) -> EgoRecord:
    return EgoRecord(t=pose.timestamp, pose=PoseRecord(**pose.pose.to_dict()))


def frame_record(frame: FeatureFrame) -> FrameRecord:
    return FrameRecord(
        t=frame.timestamp,
        sensor_id=frame.sensor_id,
        poles=[PoleRecord(**p.to_dict()) for p in frame.poles],
        ground_points=[tuple(float(v) for v in row) for row in frame.ground_points],
    )


def config_record(sensors, vehicle: Optional[VehicleGeometry] = None) -> ConfigRecord:
    vehicle = vehicle or VehicleGeometry()
    return ConfigRecord(
        sensors=[SensorRecord(**s.to_dict()) for s in sensors],
        vehicle=VehicleRecord(**vehicle.to_dict()),
    )

"""Calibration result containers."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

from geometry import RigidTransform


class Stage(Enum):
    """How much of each calibration has been estimated."""
    YAW_ONLY = "yaw_only"
    XY_YAW = "xy_yaw"
    FULL = "full"

    @property
    def rank(self) -> int:
        return {"yaw_only": 0, "xy_yaw": 1, "full": 2}[self.value]


@dataclass(frozen=True)
class CalibrationSet:
    """
    Per-sensor extrinsic calibrations T^V_S plus stage provenance.

    Attributes:
        transforms: sensor id -> sensor-to-vehicle transform
        stage: which pipeline stage produced the set
        timestamp: time of the last update (seconds, stream clock)
        warnings: degeneracy / convergence notes attached along the way
    """
    transforms: Mapping[str, RigidTransform]
    stage: Stage = Stage.YAW_ONLY
    timestamp: Optional[float] = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "transforms", dict(self.transforms))
        if isinstance(self.stage, str):
            object.__setattr__(self, "stage", Stage(self.stage))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    def __getitem__(self, sensor_id: str) -> RigidTransform:
        return self.transforms[sensor_id]

    def __contains__(self, sensor_id: str) -> bool:
        return sensor_id in self.transforms

    def __iter__(self) -> Iterator[str]:
        return iter(self.transforms)

    def __len__(self) -> int:
        return len(self.transforms)

    @property
    def sensor_ids(self) -> list[str]:
        return list(self.transforms)

    def yaw(self, sensor_id: str) -> float:
        return self.transforms[sensor_id].yaw

    def replace(self, transforms: Optional[Mapping[str, RigidTransform]] = None,
                stage: Optional[Stage] = None, timestamp: Optional[float] = None,
                warnings: Optional[Iterable[str]] = None) -> "CalibrationSet":
        return CalibrationSet(
            transforms=self.transforms if transforms is None else transforms,
            stage=self.stage if stage is None else stage,
            timestamp=self.timestamp if timestamp is None else timestamp,
            warnings=self.warnings if warnings is None else tuple(warnings),
        )

    def with_transform(self, sensor_id: str, transform: RigidTransform) -> "CalibrationSet":
        transforms = dict(self.transforms)
        transforms[sensor_id] = transform
        return self.replace(transforms=transforms)

    def with_warning(self, message: str) -> "CalibrationSet":
        return self.replace(warnings=self.warnings + (message,))

    def shifted(self, offset: np.ndarray) -> "CalibrationSet":
        """Add a common translation offset to every sensor."""
        offset = np.asarray(offset, dtype=float)
        return self.replace(transforms={
            sid: T.with_translation(T.translation + offset) for sid, T in self.transforms.items()
        })

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "timestamp": self.timestamp,
            "warnings": list(self.warnings),
            "sensors": [
                {"id": sid, **T.to_dict()} for sid, T in self.transforms.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationSet":
        transforms = {
            str(entry["id"]): RigidTransform(entry["translation"], entry["rotation"])
            for entry in data.get("sensors", [])
        }
        return cls(
            transforms=transforms,
            stage=Stage(data.get("stage", "full")),
            timestamp=data.get("timestamp"),
            warnings=tuple(data.get("warnings", ())),
        )

"""Timestamped per-sensor feature bundles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from features.poles import Pole, poles_to_array


@dataclass(frozen=True)
class GroundPatch:
    """Ground points of one sensor at one timestamp (sensor frame)."""
    sensor_id: str
    timestamp: float
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"non-finite ground point in patch {self.sensor_id}@{self.timestamp}")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class FeatureFrame:
    """Pole detections and ground points of one sensor at one timestamp."""
    sensor_id: str
    timestamp: float
    poles: tuple[Pole, ...] = ()
    ground_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        object.__setattr__(self, "poles", tuple(self.poles))
        object.__setattr__(self, "ground_points", np.asarray(self.ground_points, dtype=float).reshape(-1, 3))

    def pole_array(self) -> np.ndarray:
        return poles_to_array(self.poles)

    @property
    def ground_patch(self) -> GroundPatch:
        return GroundPatch(self.sensor_id, self.timestamp, self.ground_points)

    def replace(self, poles: Sequence[Pole] | None = None,
                ground_points: np.ndarray | None = None,
                timestamp: float | None = None) -> "FeatureFrame":
        return FeatureFrame(
            sensor_id=self.sensor_id,
            timestamp=self.timestamp if timestamp is None else timestamp,
            poles=self.poles if poles is None else tuple(poles),
            ground_points=self.ground_points if ground_points is None else ground_points,
        )


# sensor id -> time-sorted frames
FrameStreams = dict[str, list[FeatureFrame]]

"""
Pole landmarks and the pole distance metrics.

A pole is summarized by its base and top points. The distance from a pole
to a point is the perpendicular distance to the infinite line through base
and top, so it does not depend on the pole length.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from errors import DegeneratePole
from geometry import RigidTransform

MIN_POLE_LENGTH = 1e-9


class FrameTag(Enum):
    """Coordinate frame a feature is expressed in."""
    SENSOR = "sensor"
    VEHICLE = "vehicle"
    WORLD = "world"


@dataclass(frozen=True)
class Pole:
    """Vertical linear landmark (tree trunk, lamp post) as base/top points."""
    base: np.ndarray
    top: np.ndarray
    frame: FrameTag = FrameTag.SENSOR

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float).reshape(3))
        object.__setattr__(self, "top", np.asarray(self.top, dtype=float).reshape(3))
        if isinstance(self.frame, str):
            object.__setattr__(self, "frame", FrameTag(self.frame))
        _check_length(self)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.top - self.base))

    @property
    def centroid(self) -> np.ndarray:
        return 0.5 * (self.base + self.top)

    def endpoints(self) -> np.ndarray:
        """(2,3) array [base, top]."""
        return np.stack([self.base, self.top])

    def to_dict(self) -> dict:
        return {"base": [float(v) for v in self.base], "top": [float(v) for v in self.top]}


def _check_length(pole: Pole):
    if pole.length < MIN_POLE_LENGTH:
        raise DegeneratePole(f"pole length {pole.length:.3e} m below {MIN_POLE_LENGTH:g} m")


def pole_point_distance(pole: Pole, point: Sequence[float]) -> float:
    """Perpendicular distance from a point to the line through the pole."""
    _check_length(pole)
    p = np.asarray(point, dtype=float)
    cross = np.cross(p - pole.top, p - pole.base)
    return float(np.linalg.norm(cross) / np.linalg.norm(pole.top - pole.base))


def pole_pole_distance(p: Pole, q: Pole) -> float:
    """Root-sum-square of q's endpoint distances to p's line."""
    _check_length(q)
    d_base = pole_point_distance(p, q.base)
    d_top = pole_point_distance(p, q.top)
    return float(np.hypot(d_base, d_top))


def transform_pole(transform: RigidTransform, pole: Pole, frame: FrameTag | None = None) -> Pole:
    """Map both pole endpoints by transform and retag the frame."""
    mapped = transform.apply(pole.endpoints())
    if frame is None:
        frame = FrameTag.VEHICLE if pole.frame == FrameTag.SENSOR else FrameTag.WORLD
    return Pole(mapped[0], mapped[1], frame)


# --------------------
# Vectorized kernels
# --------------------
def poles_to_array(poles: Sequence[Pole]) -> np.ndarray:
    """Stack poles into an (N, 2, 3) array of [base, top] endpoints."""
    if not poles:
        return np.zeros((0, 2, 3))
    return np.stack([pole.endpoints() for pole in poles])


def point_line_offsets(line_base: np.ndarray, line_top: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    Perpendicular offset vectors from each point to its line, shape (N, 3).

    The norm of each row equals ||(p - top) x (p - base)|| / ||top - base||.
    """
    direction = line_top - line_base
    length = np.linalg.norm(direction, axis=-1, keepdims=True)
    if np.any(length < MIN_POLE_LENGTH):
        raise DegeneratePole("pole array contains a zero-length pole")
    unit = direction / length
    rel = points - line_base
    return rel - np.sum(rel * unit, axis=-1, keepdims=True) * unit


def pole_pair_residuals(line_poles: np.ndarray, point_poles: np.ndarray) -> np.ndarray:
    """
    Offsets of point_poles' endpoints from line_poles' lines, shape (N, 6).

    The row norm is the pole-pole distance D(line_pole, point_pole).
    """
    base_off = point_line_offsets(line_poles[:, 0], line_poles[:, 1], point_poles[:, 0])
    top_off = point_line_offsets(line_poles[:, 0], line_poles[:, 1], point_poles[:, 1])
    return np.concatenate([base_off, top_off], axis=1)


def pole_pair_distances(line_poles: np.ndarray, point_poles: np.ndarray) -> np.ndarray:
    """Vectorized pole_pole_distance over aligned (N,2,3) arrays."""
    if len(line_poles) == 0:
        return np.zeros(0)
    return np.linalg.norm(pole_pair_residuals(line_poles, point_poles), axis=1)


def transform_pole_array(rotation: np.ndarray, translation: np.ndarray, poles: np.ndarray) -> np.ndarray:
    """Apply one rotation matrix (3,3) or a stack (N,3,3) to an (N,2,3) pole array."""
    if rotation.ndim == 2:
        return poles @ rotation.T + translation
    return np.einsum("nij,nkj->nki", rotation, poles) + translation[:, None, :]

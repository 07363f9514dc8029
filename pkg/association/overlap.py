"""
Cross-sensor association: field-of-view overlap wedges and candidate pole pairs.

Two sensors are neighbors when their horizontal FOV wedges intersect under
the current yaw guesses. Candidates are pole pairs seen at the same
timestamp whose vehicle-frame bases lie in the shared wedge and within a
coarse distance gate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

import config
from association.sensors import SensorConfig
from calibration.models import CalibrationSet
from errors import NoNeighbors
from features import FeatureFrame, FrameStreams, FrameTag, Pole, transform_pole_array
from geometry import wrap_angle
from monitoring import get_run_logger


@dataclass(frozen=True)
class OverlapWedge:
    """Vehicle-frame azimuth sector shared by two sensors."""
    sensor_pair: tuple[str, str]
    center: float
    half_width: float

    def contains(self, points_xy: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Boolean mask of (N,2) vehicle-frame points whose azimuth lies in the wedge."""
        points_xy = np.asarray(points_xy, dtype=float).reshape(-1, 2)
        azimuth = np.arctan2(points_xy[:, 1], points_xy[:, 0])
        offset = np.abs((azimuth - self.center + np.pi) % (2 * np.pi) - np.pi)
        return offset <= self.half_width + margin + 1e-12

    @property
    def key(self) -> str:
        return pair_key(*self.sensor_pair)


@dataclass(frozen=True)
class CandidatePair:
    """A cross-sensor pole pair whose correspondence the MIP decides."""
    sensor_pair: tuple[str, str]
    pole_a: Pole
    pole_b: Pole
    timestamp: float
    index: int

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "sensor_pair": list(self.sensor_pair),
            "timestamp": self.timestamp,
            "pole_a": self.pole_a.to_dict(),
            "pole_b": self.pole_b.to_dict(),
        }


def pair_key(a: str, b: str) -> str:
    """Config key for a sensor pair, e.g. "front_left|front_right"."""
    return f"{a}|{b}"


def overlap_angle(a: SensorConfig, b: SensorConfig, yaw_a: float, yaw_b: float) -> Optional[float]:
    """
    Angular overlap of two FOV wedges: (fov_a + fov_b)/2 - |yaw_a - yaw_b|.

    Returns None when the wedges do not overlap.
    """
    delta = abs(wrap_angle(yaw_a - yaw_b))
    overlap = 0.5 * (a.fov_angle + b.fov_angle) - delta
    return overlap if overlap > 0 else None


def overlap_wedge(a: SensorConfig, b: SensorConfig, yaw_a: float, yaw_b: float) -> Optional[OverlapWedge]:
    """Intersection of the two azimuth intervals, or None if they are disjoint."""
    if overlap_angle(a, b, yaw_a, yaw_b) is None:
        return None
    # Work relative to sensor a's boresight so the intervals do not wrap.
    d = wrap_angle(yaw_b - yaw_a)
    lo = max(-0.5 * a.fov_angle, d - 0.5 * b.fov_angle)
    hi = min(0.5 * a.fov_angle, d + 0.5 * b.fov_angle)
    if hi <= lo:
        return None
    return OverlapWedge(
        sensor_pair=(a.id, b.id),
        center=wrap_angle(yaw_a + 0.5 * (lo + hi)),
        half_width=0.5 * (hi - lo),
    )


def neighbor_pairs(sensors: Sequence[SensorConfig], calib: CalibrationSet,
                   overrides: Optional[Mapping[str, Sequence[float]]] = None) -> list[OverlapWedge]:
    """
    Overlap wedges of every unordered neighboring pair, in sensor order.

    overrides maps pair_key(a, b) to a manual (center, half_width) in radians;
    an override also declares the pair as neighbors regardless of yaw.
    """
    overrides = dict(overrides or {})
    wedges = []
    for i, a in enumerate(sensors):
        for b in sensors[i + 1:]:
            manual = overrides.get(pair_key(a.id, b.id)) or overrides.get(pair_key(b.id, a.id))
            if manual is not None:
                center, half_width = float(manual[0]), float(manual[1])
                wedges.append(OverlapWedge((a.id, b.id), wrap_angle(center), abs(half_width)))
                continue
            wedge = overlap_wedge(a, b, calib.yaw(a.id), calib.yaw(b.id))
            if wedge is not None:
                wedges.append(wedge)
    return wedges


def _frames_by_time(frames: Sequence[FeatureFrame]) -> dict[float, FeatureFrame]:
    return {frame.timestamp: frame for frame in frames}


def _vehicle_bases(frame: FeatureFrame, calib: CalibrationSet) -> tuple[np.ndarray, np.ndarray]:
    """Sensor-frame pole array and vehicle-frame base XY of one frame."""
    poles = frame.pole_array()
    if len(poles) == 0:
        return poles, np.zeros((0, 2))
    T = calib[frame.sensor_id]
    mapped = transform_pole_array(T.rotation_matrix, T.translation, poles)
    return poles, mapped[:, 0, :2]


def subsample_indices(count: int, cap: int) -> np.ndarray:
    """Fixed-stride subset of range(count) with at most cap entries."""
    if count <= cap:
        return np.arange(count)
    if cap <= 0:
        return np.zeros(0, dtype=int)
    return np.unique(np.round(np.linspace(0, count - 1, cap)).astype(int))


def build_candidates(frames: FrameStreams, calib_guess: CalibrationSet,
                     sensors: Sequence[SensorConfig], gate: Optional[float] = None,
                     cap: Optional[int] = None,
                     overrides: Optional[Mapping[str, Sequence[float]]] = None,
                     margin: Optional[float] = None) -> list[CandidatePair]:
    """
    Candidate pole pairs for every neighboring sensor pair.

    Pairs are emitted per common timestamp in (time, pole_a, pole_b) order and
    subsampled to at most cap per sensor pair with a fixed stride. Indices are
    dense over the returned list.
    """
    gate = config.CANDIDATE_GATE if gate is None else gate
    cap = config.CANDIDATE_CAP if cap is None else cap
    margin = config.WEDGE_MARGIN if margin is None else margin

    wedges = neighbor_pairs(sensors, calib_guess, overrides)
    if not wedges:
        raise NoNeighbors("no pair of sensors has overlapping fields of view")

    candidates: list[CandidatePair] = []
    for wedge in wedges:
        id_a, id_b = wedge.sensor_pair
        by_time_a = _frames_by_time(frames.get(id_a, []))
        by_time_b = _frames_by_time(frames.get(id_b, []))
        raw: list[tuple[float, np.ndarray, np.ndarray]] = []

        for t in sorted(set(by_time_a) & set(by_time_b)):
            poles_a, xy_a = _vehicle_bases(by_time_a[t], calib_guess)
            poles_b, xy_b = _vehicle_bases(by_time_b[t], calib_guess)
            if len(poles_a) == 0 or len(poles_b) == 0:
                continue
            in_a = np.nonzero(wedge.contains(xy_a, margin))[0]
            in_b = np.nonzero(wedge.contains(xy_b, margin))[0]
            if len(in_a) == 0 or len(in_b) == 0:
                continue
            dist = np.linalg.norm(xy_a[in_a][:, None, :] - xy_b[in_b][None, :, :], axis=2)
            for i, j in zip(*np.nonzero(dist <= gate)):
                raw.append((t, poles_a[in_a[i]], poles_b[in_b[j]]))

        keep = subsample_indices(len(raw), cap)
        if len(keep) < len(raw):
            get_run_logger().debug("association", "candidates_subsampled", reason=f"pair {wedge.key}",
                                   inputs={"raw": len(raw)}, outputs={"kept": len(keep)})
        for k in keep:
            t, pa, pb = raw[k]
            candidates.append(CandidatePair(
                sensor_pair=(id_a, id_b),
                pole_a=Pole(pa[0], pa[1], FrameTag.SENSOR),
                pole_b=Pole(pb[0], pb[1], FrameTag.SENSOR),
                timestamp=t,
                index=len(candidates),
            ))
    return candidates


def candidate_arrays(candidates: Sequence[CandidatePair]) -> tuple[np.ndarray, np.ndarray]:
    """Stack candidate poles into two aligned (N,2,3) arrays."""
    if not candidates:
        return np.zeros((0, 2, 3)), np.zeros((0, 2, 3))
    a = np.stack([c.pole_a.endpoints() for c in candidates])
    b = np.stack([c.pole_b.endpoints() for c in candidates])
    return a, b

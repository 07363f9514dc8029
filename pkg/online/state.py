"""
Online calibration state: the current estimate plus a sliding window of
observations gathered under the estimate that was current on arrival.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from association import (
    CandidatePair,
    OverlapWedge,
    SensorConfig,
    TemporalMatchSet,
    VehicleGeometry,
    match_consecutive,
    neighbor_pairs,
)
from calibration.joint_refine import PlanePairObservation, collect_plane_pairs
from calibration.models import CalibrationSet, Stage
from calibration.settings import CalibrationSettings, resolve
from calibration.yaw_estimator import HandEyeProblem
from errors import OutOfRange
from features import FeatureFrame, FrameTag, Pole, transform_pole_array
from geometry import RigidTransform, TimedPose, conjugate_increment, interpolate_pose, relative_increment
from monitoring.reason_codes import EMPTY_MATCHES

STAGES = ("yaw", "rph", "xyyaw")


@dataclass(frozen=True)
class HandEyeSample:
    """Temporal matches of one sensor between two frames and the vehicle increment between them."""
    increment: RigidTransform
    matches: TemporalMatchSet


def greedy_pairs(xy_a: np.ndarray, xy_b: np.ndarray, gate: float) -> list[tuple[int, int]]:
    """One-to-one index pairs by ascending XY distance, each within gate."""
    if len(xy_a) == 0 or len(xy_b) == 0:
        return []
    dist = np.linalg.norm(xy_a[:, None, :] - xy_b[None, :, :], axis=2)
    rows, cols = np.nonzero(dist <= gate)
    order = np.lexsort((cols, rows, dist[rows, cols]))
    used_a: set[int] = set()
    used_b: set[int] = set()
    pairs = []
    for k in order:
        i, j = int(rows[k]), int(cols[k])
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    return sorted(pairs)


def distance_pairs(frame_a: FeatureFrame, frame_b: FeatureFrame, calib: CalibrationSet,
                   wedge: OverlapWedge, gate: float, margin: float = 0.0) -> list[CandidatePair]:
    """Cross-sensor pole pairs whose vehicle-frame bases in the wedge lie within gate of each other."""
    poles_a, poles_b = frame_a.pole_array(), frame_b.pole_array()
    if len(poles_a) == 0 or len(poles_b) == 0:
        return []
    ta, tb = calib[frame_a.sensor_id], calib[frame_b.sensor_id]
    xy_a = transform_pole_array(ta.rotation_matrix, ta.translation, poles_a)[:, 0, :2]
    xy_b = transform_pole_array(tb.rotation_matrix, tb.translation, poles_b)[:, 0, :2]
    in_a = np.nonzero(wedge.contains(xy_a, margin))[0]
    in_b = np.nonzero(wedge.contains(xy_b, margin))[0]
    return [
        CandidatePair(
            sensor_pair=wedge.sensor_pair,
            pole_a=Pole(poles_a[in_a[i]][0], poles_a[in_a[i]][1], FrameTag.SENSOR),
            pole_b=Pole(poles_b[in_b[j]][0], poles_b[in_b[j]][1], FrameTag.SENSOR),
            timestamp=frame_a.timestamp,
            index=-1,
        )
        for i, j in greedy_pairs(xy_a[in_a], xy_b[in_b], gate)
    ]


@dataclass
class OnlineState:
    """
    Current calibration and the windowed observations the online updates consume.

    Every window holds at most `window` entries: hand-eye samples per sensor,
    and pole and plane pairs per synchronized timestamp.
    """
    calibration: CalibrationSet
    sensors: tuple[SensorConfig, ...]
    vehicle: VehicleGeometry = field(default_factory=VehicleGeometry)
    window: int = 100
    hand_eye: dict[str, deque] = field(default_factory=dict)
    pole_pairs: deque = field(default_factory=deque)
    plane_pairs: deque = field(default_factory=deque)
    last_frames: dict[str, FeatureFrame] = field(default_factory=dict)
    ego: list[TimedPose] = field(default_factory=list)
    last_update: dict[str, Optional[float]] = field(default_factory=dict)
    health: dict[str, set[str]] = field(default_factory=dict)
    timestamp: Optional[float] = None
    steps: int = 0
    _problems: dict[str, HandEyeProblem] = field(default_factory=dict, repr=False)

    @classmethod
    def initialize(cls, calib: CalibrationSet, sensors: Sequence[SensorConfig],
                   vehicle: Optional[VehicleGeometry] = None,
                   settings: Optional[CalibrationSettings] = None) -> "OnlineState":
        """Start from an (offline) calibration; every configured sensor must be calibrated."""
        cfg = resolve(settings)
        missing = [s.id for s in sensors if s.id not in calib]
        if missing:
            raise OutOfRange(f"initial calibration lacks sensors {missing}", stage="online")
        window = cfg.online.window
        return cls(
            calibration=calib.replace(transforms={s.id: calib[s.id] for s in sensors}, stage=Stage.FULL),
            sensors=tuple(sensors),
            vehicle=vehicle or VehicleGeometry(),
            window=window,
            hand_eye={s.id: deque(maxlen=window) for s in sensors},
            pole_pairs=deque(maxlen=window),
            plane_pairs=deque(maxlen=window),
            last_update={stage: None for stage in STAGES},
            health={s.id: set() for s in sensors},
            timestamp=calib.timestamp,
        )

    @property
    def sensor_ids(self) -> list[str]:
        return [s.id for s in self.sensors]

    # --------------------
    # Window access
    # --------------------
    def hand_eye_samples(self, sensor_id: str) -> list[HandEyeSample]:
        return list(self.hand_eye.get(sensor_id, ()))

    def hand_eye_problem(self, sensor_id: str) -> HandEyeProblem:
        """The window's hand-eye samples stacked once per window change."""
        problem = self._problems.get(sensor_id)
        if problem is None:
            samples = self.hand_eye_samples(sensor_id)
            problem = HandEyeProblem.from_matches([s.increment for s in samples], [s.matches for s in samples])
            self._problems[sensor_id] = problem
        return problem

    def windowed_pole_pairs(self) -> list[CandidatePair]:
        return [pair for _, pairs in self.pole_pairs for pair in pairs]

    def windowed_plane_pairs(self) -> list[PlanePairObservation]:
        return [pair for _, pairs in self.plane_pairs for pair in pairs]

    def window_sizes(self) -> dict[str, int]:
        return {
            "hand_eye": max((len(v) for v in self.hand_eye.values()), default=0),
            "pole_pairs": len(self.pole_pairs),
            "plane_pairs": len(self.plane_pairs),
        }

    def flag(self, sensor_id: str, reason: str):
        self.health.setdefault(sensor_id, set()).add(reason)

    def flag_all(self, reason: str):
        for sid in self.sensor_ids:
            self.flag(sid, reason)

    def set_calibration(self, calib: CalibrationSet):
        self.calibration = calib.replace(stage=Stage.FULL)

    # --------------------
    # Ingestion
    # --------------------
    def add_ego(self, samples: Sequence[TimedPose]):
        """Append ego samples newer than the last one held."""
        for sample in samples:
            if self.ego and sample.timestamp <= self.ego[-1].timestamp:
                continue
            self.ego.append(sample)

    def _prune_ego(self):
        """Drop ego samples no frame in the window can need any more."""
        oldest = min((f.timestamp for f in self.last_frames.values()), default=None)
        if oldest is None:
            return
        keep_from = 0
        for k, sample in enumerate(self.ego):
            if sample.timestamp <= oldest:
                keep_from = k
        del self.ego[:keep_from]

    def ingest(self, batch: Mapping[str, FeatureFrame], ego: Sequence[TimedPose] = (),
               settings: Optional[CalibrationSettings] = None) -> bool:
        """
        Add one synchronized batch of frames to the windows.

        Temporal matches are predicted and cross-sensor pairs gated with the
        current calibration. Returns False when the batch holds no frame.
        """
        cfg = resolve(settings)
        self.add_ego(ego)
        frames = {sid: f for sid, f in batch.items() if sid in self.health}
        if not frames:
            return False
        t = max(f.timestamp for f in frames.values())
        self.health = {sid: set() for sid in self.sensor_ids}

        for sid, frame in frames.items():
            previous = self.last_frames.get(sid)
            if previous is not None and frame.timestamp > previous.timestamp:
                try:
                    increment = relative_increment(
                        interpolate_pose(self.ego, previous.timestamp), interpolate_pose(self.ego, frame.timestamp)
                    )
                except OutOfRange:
                    self.flag(sid, EMPTY_MATCHES)
                else:
                    predicted = conjugate_increment(self.calibration[sid], increment)
                    matches = match_consecutive(previous, frame, predicted, cfg.association.match_max_dist)
                    if len(matches):
                        self.hand_eye[sid].append(HandEyeSample(increment, matches))
                        self._problems.pop(sid, None)
            self.last_frames[sid] = frame

        wedges = neighbor_pairs(self.sensors, self.calibration, cfg.association.wedge_overrides)
        pole_pairs: list[CandidatePair] = []
        for wedge in wedges:
            a, b = wedge.sensor_pair
            if a in frames and b in frames:
                pole_pairs.extend(distance_pairs(frames[a], frames[b], self.calibration, wedge,
                                                 cfg.online.pair_gate, cfg.association.wedge_margin))
        self.pole_pairs.append((t, pole_pairs))
        ground = {sid: [f] for sid, f in frames.items()}
        self.plane_pairs.append((t, collect_plane_pairs(ground, self.calibration, wedges, cfg)))

        self.timestamp = t
        self._prune_ego()
        return True

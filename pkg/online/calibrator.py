"""Online calibration loop: window refresh, the three updates in order, one report per step."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from association import SensorConfig, VehicleGeometry
from calibration.models import CalibrationSet
from calibration.settings import CalibrationSettings, resolve
from features import FeatureFrame, FrameStreams
from geometry import TimedPose, wrap_angle
from monitoring import get_run_logger
from online.state import OnlineState
from online.updates import (
    online_update_rph,
    online_update_xyyaw,
    online_update_yaw,
    pair_residual,
    yaw_residuals,
)
from streams import write_jsonl


@dataclass(frozen=True)
class OnlineReport:
    """Snapshot of one online step; one JSONL row per step."""
    step: int
    timestamp: Optional[float]
    poses: dict[str, dict[str, float]]
    yaw_residuals: dict[str, Optional[float]] = field(default_factory=dict)
    pair_residual: Optional[float] = None
    window: dict[str, int] = field(default_factory=dict)
    health: dict[str, list[str]] = field(default_factory=dict)
    timings_ms: dict[str, float] = field(default_factory=dict)
    updated: bool = True

    @property
    def step_ms(self) -> float:
        return float(sum(self.timings_ms.values()))

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "t": self.timestamp,
            "updated": self.updated,
            "poses": self.poses,
            "yaw_residuals": self.yaw_residuals,
            "pair_residual": self.pair_residual,
            "window": self.window,
            "health": self.health,
            "timings_ms": self.timings_ms,
        }


def pose_summary(calib: CalibrationSet) -> dict[str, dict[str, float]]:
    """x, y, z (m) and roll, pitch, yaw (rad) per sensor."""
    out = {}
    for sid, T in calib.transforms.items():
        e = T.euler
        x, y, z = (float(v) for v in T.translation)
        out[sid] = {"x": x, "y": y, "z": z, "roll": e.roll, "pitch": e.pitch, "yaw": e.yaw}
    return out


def _report(state: OnlineState, timings: dict[str, float], updated: bool,
            settings: CalibrationSettings) -> OnlineReport:
    return OnlineReport(
        step=state.steps,
        timestamp=state.timestamp,
        poses=pose_summary(state.calibration),
        yaw_residuals=yaw_residuals(state),
        pair_residual=pair_residual(state, settings),
        window=state.window_sizes(),
        health={sid: sorted(flags) for sid, flags in state.health.items()},
        timings_ms=timings,
        updated=updated,
    )


def step(state: OnlineState, batch: Mapping[str, FeatureFrame], ego: Sequence[TimedPose] = (),
         settings: Optional[CalibrationSettings] = None) -> tuple[OnlineState, OnlineReport]:
    """
    Refresh the windows with one synchronized batch, then update yaw, then
    roll/pitch/heights, then x/y/yaw.

    An empty batch leaves the calibration untouched. Sub-steps never raise
    for lack of data; they flag the affected sensors instead.
    """
    cfg = resolve(settings)
    timings: dict[str, float] = {}
    start = time.perf_counter()
    if not state.ingest(batch, ego, cfg):
        return state, _report(state, timings, False, cfg)
    timings["ingest"] = (time.perf_counter() - start) * 1000.0

    for name, update in (("yaw", online_update_yaw), ("rph", online_update_rph), ("xyyaw", online_update_xyyaw)):
        start = time.perf_counter()
        update(state, settings=cfg)
        timings[name] = (time.perf_counter() - start) * 1000.0

    state.steps += 1
    report = _report(state, timings, True, cfg)
    flagged = {sid: flags for sid, flags in report.health.items() if flags}
    if flagged:
        get_run_logger().debug("online", "health", outputs={"t": state.timestamp, "flags": flagged})
    return state, report


class OnlineCalibrator:
    """Owns one OnlineState and feeds it synchronized frame batches."""

    def __init__(self, settings: Optional[CalibrationSettings] = None):
        self.settings = resolve(settings)
        self.state: Optional[OnlineState] = None
        self.reports: list[OnlineReport] = []

    def initialize(self, calib: CalibrationSet, sensors: Sequence[SensorConfig],
                   vehicle: Optional[VehicleGeometry] = None) -> OnlineState:
        self.state = OnlineState.initialize(calib, sensors, vehicle, self.settings)
        self.reports = []
        get_run_logger().info("online", "initialized", inputs={
            "sensors": [s.id for s in sensors], "window": self.state.window, "alpha": self.settings.online.alpha,
        })
        return self.state

    @property
    def calibration(self) -> CalibrationSet:
        if self.state is None:
            raise RuntimeError("OnlineCalibrator.initialize must be called first")
        return self.state.calibration

    def step(self, batch: Mapping[str, FeatureFrame], ego: Sequence[TimedPose] = ()) -> OnlineReport:
        if self.state is None:
            raise RuntimeError("OnlineCalibrator.initialize must be called first")
        self.state, report = step(self.state, batch, ego, self.settings)
        self.reports.append(report)
        return report

    def replay(self, ego: Sequence[TimedPose], frames: FrameStreams,
               until: Optional[float] = None) -> list[OnlineReport]:
        """
        Feed whole recorded streams batch by batch in time order.

        Each batch comes with the ego samples up to its timestamp.
        """
        by_time: dict[float, dict[str, FeatureFrame]] = {}
        for sid, stream in frames.items():
            for frame in stream:
                by_time.setdefault(frame.timestamp, {})[sid] = frame
        ego = sorted(ego, key=lambda p: p.timestamp)
        cursor = 0
        reports = []
        with get_run_logger().timed("online", "replay") as outputs:
            for t in sorted(by_time):
                if until is not None and t > until:
                    break
                start = cursor
                while cursor < len(ego) and ego[cursor].timestamp <= t:
                    cursor += 1
                reports.append(self.step(by_time[t], ego[start:cursor]))
            outputs["steps"] = len(reports)
            outputs["max_step_ms"] = max((r.step_ms for r in reports), default=0.0)
        return reports

    def write_reports(self, path: str, reports: Optional[Iterable[OnlineReport]] = None) -> int:
        rows = [r.to_dict() for r in (self.reports if reports is None else reports)]
        return write_jsonl(path, rows)


def max_drift(reports: Sequence[OnlineReport], reference: CalibrationSet) -> tuple[float, float]:
    """Largest translation (m) and orientation proxy (rad, max abs Euler angle) deviation over reports."""
    worst_t, worst_r = 0.0, 0.0
    ref = pose_summary(reference)
    for report in reports:
        for sid, pose in report.poses.items():
            base = ref[sid]
            worst_t = max(worst_t, math.dist((pose["x"], pose["y"], pose["z"]), (base["x"], base["y"], base["z"])))
            worst_r = max(worst_r, *(abs(wrap_angle(pose[k] - base[k])) for k in ("roll", "pitch", "yaw")))
    return worst_t, worst_r

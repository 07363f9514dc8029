"""Stream file ingestion: parse, validate, group by sensor and synchronize."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np
import pydantic

import config
from association import SensorConfig, VehicleGeometry
from calibration.models import CalibrationSet
from errors import ParseError, ValidationError
from features import FeatureFrame, FrameStreams
from geometry import TimedPose
from monitoring import get_run_logger
from streams.records import (
    RECORD_ADAPTER,
    ConfigRecord,
    EgoRecord,
    FrameRecord,
    HeaderRecord,
)


@dataclass
class StreamBundle:
    """Everything one stream file holds, ready for the pipelines."""
    ego: list[TimedPose] = field(default_factory=list)
    frames: FrameStreams = field(default_factory=dict)
    sensors: tuple[SensorConfig, ...] = ()
    vehicle: VehicleGeometry = field(default_factory=VehicleGeometry)
    header: Optional[HeaderRecord] = None

    @property
    def sensor_ids(self) -> list[str]:
        return [s.id for s in self.sensors] if self.sensors else list(self.frames)

    @property
    def is_empty(self) -> bool:
        return not self.ego and not any(self.frames.values())

    def frame_times(self) -> list[float]:
        return sorted({f.timestamp for stream in self.frames.values() for f in stream})

    def batches(self) -> Iterator[tuple[float, dict[str, FeatureFrame]]]:
        """Frames grouped by synchronized timestamp, in time order."""
        by_time: dict[float, dict[str, FeatureFrame]] = {}
        for sid, stream in self.frames.items():
            for frame in stream:
                by_time.setdefault(frame.timestamp, {})[sid] = frame
        for t in sorted(by_time):
            yield t, by_time[t]


def parse_line(line: str, line_number: int):
    """
    Parse one JSONL line into a typed record.

    Raises:
        ParseError: malformed JSON or a record that does not match its schema
    """
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line_number) from e
    try:
        return RECORD_ADAPTER.validate_python(payload)
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        raise ParseError(f"invalid record at '{where}': {first.get('msg')}", line_number) from e


def iter_records(path: str) -> Iterator[tuple[int, object]]:
    """(line number, record) for every non-blank line of a stream file."""
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if line.strip():
                yield number, parse_line(line, number)


def synchronize(frames: FrameStreams, sync_tol: float) -> FrameStreams:
    """
    Snap frame timestamps to a common clock.

    Timestamps are clustered in time order; a timestamp within sync_tol of the
    first timestamp of the open cluster joins it and takes that timestamp.

    Raises:
        ValidationError: a sensor contributes two frames to one cluster
    """
    times = np.array(sorted({f.timestamp for stream in frames.values() for f in stream}))
    if len(times) == 0:
        return {sid: list(stream) for sid, stream in frames.items()}
    snapped: dict[float, float] = {}
    start = times[0]
    for t in times:
        if t - start > sync_tol:
            start = t
        snapped[float(t)] = float(start)

    out: FrameStreams = {}
    for sid, stream in frames.items():
        synced = []
        for frame in stream:
            t = snapped[frame.timestamp]
            if synced and synced[-1].timestamp == t:
                raise ValidationError(
                    f"sensor {sid} has two frames within sync_tol={sync_tol}s of t={t:.6f}",
                    invariant="one_frame_per_sensor_per_bin",
                )
            synced.append(frame if t == frame.timestamp else frame.replace(timestamp=t))
        out[sid] = synced
    return out


def build_bundle(records: Iterable[tuple[int, object]], sync_tol: float = config.SYNC_TOL) -> StreamBundle:
    """
    Group parsed records into a StreamBundle.

    Raises:
        ValidationError: a stream invariant is violated (the invariant is named)
    """
    bundle = StreamBundle()
    config_seen = False
    last_frame_t: dict[str, float] = {}
    frame_records: list[tuple[int, FrameRecord]] = []
    position = 0

    for number, record in records:
        position += 1
        if isinstance(record, HeaderRecord):
            if position != 1:
                raise ValidationError(f"line {number}: header must be the first record", invariant="header_first")
            bundle.header = record
        elif isinstance(record, ConfigRecord):
            if config_seen:
                raise ValidationError(f"line {number}: more than one config record", invariant="single_config")
            config_seen = True
            bundle.sensors = tuple(s.to_sensor() for s in record.sensors)
            bundle.vehicle = record.vehicle.to_vehicle()
        elif isinstance(record, EgoRecord):
            if bundle.ego and record.t <= bundle.ego[-1].timestamp:
                raise ValidationError(
                    f"line {number}: ego timestamp {record.t} not after {bundle.ego[-1].timestamp}",
                    invariant="ego_time_order",
                )
            bundle.ego.append(record.to_pose())
        elif isinstance(record, FrameRecord):
            previous = last_frame_t.get(record.sensor_id)
            if previous is not None and record.t <= previous:
                raise ValidationError(
                    f"line {number}: frame timestamp {record.t} of sensor {record.sensor_id} not after {previous}",
                    invariant="frame_time_order",
                )
            last_frame_t[record.sensor_id] = record.t
            frame_records.append((number, record))

    known = {s.id for s in bundle.sensors}
    frames: FrameStreams = {s.id: [] for s in bundle.sensors}
    for number, record in frame_records:
        if config_seen and record.sensor_id not in known:
            raise ValidationError(
                f"line {number}: frame for unconfigured sensor {record.sensor_id}", invariant="known_sensor"
            )
        frames.setdefault(record.sensor_id, []).append(record.to_frame())
    bundle.frames = synchronize(frames, sync_tol)
    return bundle


def read_streams(path: str, sync_tol: float = config.SYNC_TOL) -> StreamBundle:
    """
    Read a JSONL stream file.

    An empty file gives empty streams.

    Raises:
        ParseError: a line is not a valid record (carries the line number)
        ValidationError: records violate a stream invariant
    """
    if not os.path.exists(path):
        raise ParseError(f"stream file not found: {path}")
    bundle = build_bundle(iter_records(path), sync_tol)
    get_run_logger().debug(
        "io", "read_streams",
        inputs={"path": path},
        outputs={"ego": len(bundle.ego), "sensors": len(bundle.frames),
                 "frames": sum(len(s) for s in bundle.frames.values())},
    )
    return bundle


def read_calibration(path: str) -> CalibrationSet:
    """
    Load a calibration file written by write_calibration.

    Raises:
        ParseError: missing file, invalid JSON or missing fields
    """
    if not os.path.exists(path):
        raise ParseError(f"calibration file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as e:
        raise ParseError(f"calibration file {path} is not valid JSON: {e.msg}", e.lineno) from e
    try:
        return CalibrationSet.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"calibration file {path} is malformed: {e}") from e

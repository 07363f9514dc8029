"""Stream and calibration file writers."""
from __future__ import annotations

import json
import os
from typing import Any, Iterable, Optional, Sequence

from association import SensorConfig, VehicleGeometry
from calibration.models import CalibrationSet
from features import FrameStreams
from geometry import TimedPose
from monitoring import get_run_logger
from streams.records import HeaderRecord, config_record, frame_record, pose_record


def _ensure_dir(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def _dumps(payload: dict) -> str:
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=True)


def write_jsonl(path: str, rows: Iterable[dict[str, Any]]) -> int:
    """Write dicts one per line, replacing the file. Returns the row count."""
    _ensure_dir(path)
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(_dumps(row))
            handle.write("\n")
            count += 1
    return count


def stream_records(ego: Sequence[TimedPose], frames: FrameStreams,
                   sensors: Sequence[SensorConfig], vehicle: Optional[VehicleGeometry] = None,
                   producer: str = "", seed: Optional[int] = None) -> list[dict]:
    """
    Records in file order: header, config, then ego and frames merged by time.

    At equal timestamps the ego pose comes first, followed by frames in sensor
    order.
    """
    order = {s.id: k for k, s in enumerate(sensors)}
    timed = [(p.timestamp, -1, "", pose_record(p)) for p in ego]
    for sid, stream in frames.items():
        rank = order.get(sid, len(order))
        timed.extend((f.timestamp, rank, sid, frame_record(f)) for f in stream)
    timed.sort(key=lambda item: item[:3])

    rows = [
        HeaderRecord(producer=producer, seed=seed).model_dump(mode="json"),
        config_record(sensors, vehicle).model_dump(mode="json"),
    ]
    rows.extend(record.model_dump(mode="json") for *_, record in timed)
    return rows


def write_streams(path: str, ego: Sequence[TimedPose], frames: FrameStreams,
                  sensors: Sequence[SensorConfig], vehicle: Optional[VehicleGeometry] = None,
                  producer: str = "", seed: Optional[int] = None) -> int:
    """Write a JSONL stream file readable by read_streams. Returns the record count."""
    count = write_jsonl(path, stream_records(ego, frames, sensors, vehicle, producer, seed))
    get_run_logger().debug("io", "write_streams", inputs={"path": path}, outputs={"records": count})
    return count


def write_calibration(path: str, calib: CalibrationSet):
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(calib.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")

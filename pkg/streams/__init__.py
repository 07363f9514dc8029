"""JSONL stream records and calibration files."""

from streams.reader import StreamBundle, read_calibration, read_streams, synchronize
from streams.writer import write_calibration, write_jsonl, write_streams

__all__ = [
    "StreamBundle",
    "read_calibration",
    "read_streams",
    "synchronize",
    "write_calibration",
    "write_jsonl",
    "write_streams",
]

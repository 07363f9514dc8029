"""JSONL logger for structured calibration run events."""
from __future__ import annotations

import json
import os
import sys
import time
from collections import deque
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Iterator, Optional, TextIO

import numpy as np

import config
from monitoring.models import LEVELS, RunEvent
from monitoring.reason_codes import classify_error

_THRESHOLDS = {"debug": 0, "info": 1, "warn": 2, "error": 3, "quiet": 4}


class JSONLLogger:
    """Append-only JSONL logger with simple size rotation."""

    def __init__(self, path: str, max_mb: float = 5.0):
        self.path = path
        self.max_bytes = int(max_mb * 1024 * 1024) if max_mb else 0
        log_dir = os.path.dirname(path)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

    def write(self, record: dict[str, Any]):
        """Append a JSON line to the log file."""
        self._rotate_if_needed()
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, ensure_ascii=True, default=_json_default))
            handle.write("\n")

    def _rotate_if_needed(self):
        if not self.max_bytes:
            return
        if not os.path.exists(self.path):
            return
        if os.path.getsize(self.path) <= self.max_bytes:
            return
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        rotated = f"{self.path}.{timestamp}"
        os.rename(self.path, rotated)


def _json_default(value):
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


class RunLogger:
    """
    Run event sink: optional JSONL file plus a level-filtered stderr echo.

    The most recent events are also kept in memory so callers (and tests)
    can inspect what a run reported.
    """

    def __init__(self, path: Optional[str] = None, level: Optional[str] = None,
                 max_mb: Optional[float] = None, stream: Optional[TextIO] = None,
                 keep: int = 1000):
        level = (level or config.LOG_LEVEL).lower()
        if level not in _THRESHOLDS:
            raise ValueError(f"unknown log level: {level}")
        self.level = level
        self.stream = stream
        self.file = JSONLLogger(path, config.RUN_LOG_MAX_MB if max_mb is None else max_mb) if path else None
        self.events: deque[RunEvent] = deque(maxlen=keep)

    def event(self, stage: str, event: str, level: str = "info", **fields: Any) -> RunEvent:
        record = RunEvent(timestamp=datetime.now(), stage=stage, event=event, level=level, **fields)
        self.events.append(record)
        if self.file is not None:
            self.file.write(record.to_dict())
        if _THRESHOLDS[level] >= _THRESHOLDS[self.level]:
            print(record.summary(), file=self.stream or sys.stderr)
        return record

    def debug(self, stage: str, event: str, **fields: Any) -> RunEvent:
        return self.event(stage, event, "debug", **fields)

    def info(self, stage: str, event: str, **fields: Any) -> RunEvent:
        return self.event(stage, event, "info", **fields)

    def warn(self, stage: str, event: str, **fields: Any) -> RunEvent:
        return self.event(stage, event, "warn", **fields)

    def error(self, stage: str, event: str, **fields: Any) -> RunEvent:
        return self.event(stage, event, "error", **fields)

    @contextmanager
    def timed(self, stage: str, event: str, **fields: Any) -> Iterator[dict[str, Any]]:
        """
        Time a block and emit one event when it exits.

        The yielded dict becomes the event's outputs. Exceptions are logged
        at error level with their reason code and re-raised.
        """
        outputs: dict[str, Any] = {}
        start = time.perf_counter()
        try:
            yield outputs
        except Exception as exc:
            code, outcome = classify_error(exc)
            self.error(stage, event, outcome=outcome, reason=str(exc), reason_code=code,
                       duration_ms=(time.perf_counter() - start) * 1000.0, outputs=outputs, **fields)
            raise
        self.info(stage, event, outcome="success", duration_ms=(time.perf_counter() - start) * 1000.0,
                  outputs=outputs, **fields)

    def of_level(self, level: str) -> list[RunEvent]:
        if level not in LEVELS:
            raise ValueError(f"unknown log level: {level}")
        return [e for e in self.events if e.level == level]


_run_logger: Optional[RunLogger] = None


def get_run_logger() -> RunLogger:
    """Process-wide run logger (stderr echo only until configured)."""
    global _run_logger
    if _run_logger is None:
        _run_logger = RunLogger()
    return _run_logger


def set_run_logger(logger: RunLogger) -> RunLogger:
    """Install a run logger (e.g. one writing to a JSONL file) and return the previous one."""
    global _run_logger
    previous = get_run_logger()
    _run_logger = logger
    return previous

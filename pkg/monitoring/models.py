"""Data models for calibration run logging."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Optional

LEVELS = ("debug", "info", "warn", "error")


@dataclass
class RunEvent:
    """Structured log entry emitted at stage boundaries, warnings and errors."""
    timestamp: datetime
    stage: str
    event: str
    level: str = "info"
    sensor: Optional[str] = None
    outcome: Optional[str] = None
    reason: Optional[str] = None
    reason_code: Optional[str] = None
    duration_ms: Optional[float] = None
    inputs: dict[str, Any] = field(default_factory=dict)
    outputs: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown log level: {self.level}")

    def to_dict(self) -> dict[str, Any]:
        """Convert to JSON-serializable dict."""
        return {
            "timestamp": self.timestamp.isoformat(),
            "stage": self.stage,
            "event": self.event,
            "level": self.level,
            "sensor": self.sensor,
            "outcome": self.outcome,
            "reason": self.reason,
            "reason_code": self.reason_code,
            "duration_ms": self.duration_ms,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }

    def summary(self) -> str:
        """One-line human rendering used for the stderr echo."""
        parts = [f"[{self.level}]", f"{self.stage}:{self.event}"]
        if self.sensor:
            parts.append(f"sensor={self.sensor}")
        if self.reason_code:
            parts.append(f"code={self.reason_code}")
        if self.duration_ms is not None:
            parts.append(f"{self.duration_ms:.1f}ms")
        if self.reason:
            parts.append(f"- {self.reason}")
        return " ".join(parts)

"""Exception hierarchy shared by every calibration stage.

Each error carries the pipeline stage it was raised in and the process exit
code the CLI maps it to.
"""
from __future__ import annotations

from typing import Any, Optional


class CalibrationError(Exception):
    """Base class for all calibration failures."""

    exit_code = 10
    default_stage = "general"

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.stage = stage or self.default_stage

    def with_stage(self, stage: str) -> "CalibrationError":
        self.stage = stage
        return self

    def __str__(self) -> str:
        base = super().__str__()
        return f"[{self.stage}] {base}"


class OutOfRange(CalibrationError):
    exit_code = 11
    default_stage = "geometry"


class DegeneratePole(CalibrationError):
    exit_code = 12
    default_stage = "features"


class InsufficientPoints(CalibrationError):
    exit_code = 13
    default_stage = "features"


class DegenerateGeometry(CalibrationError):
    exit_code = 14
    default_stage = "features"


class EmptyMatches(CalibrationError):
    exit_code = 15
    default_stage = "yaw"


class NonConvergence(CalibrationError):
    """Raised when an iterative stage stops without converging; best iterate in `result`."""

    exit_code = 16
    default_stage = "yaw"

    def __init__(self, message: str, result: Any = None, stage: Optional[str] = None):
        super().__init__(message, stage)
        self.result = result


class NoNeighbors(CalibrationError):
    exit_code = 17
    default_stage = "association"


class MissingYaw(CalibrationError):
    exit_code = 18
    default_stage = "mip"


class EmptyCandidates(CalibrationError):
    exit_code = 19
    default_stage = "mip"


class Infeasible(CalibrationError):
    exit_code = 20
    default_stage = "mip"


class NodeLimit(CalibrationError):
    exit_code = 21
    default_stage = "mip"


class InsufficientGround(CalibrationError):
    exit_code = 22
    default_stage = "refine"


class InvalidParams(CalibrationError):
    exit_code = 23
    default_stage = "simulator"


class SensorMismatch(CalibrationError):
    exit_code = 24
    default_stage = "evaluate"


class ParseError(CalibrationError):
    """Raised when a stream line cannot be parsed."""

    exit_code = 25
    default_stage = "io"

    def __init__(self, message: str, line_number: Optional[int] = None, stage: Optional[str] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message, stage)
        self.line_number = line_number


class ValidationError(CalibrationError):
    """Raised when parsed records violate a stream invariant."""

    exit_code = 26
    default_stage = "io"

    def __init__(self, message: str, invariant: str = "", stage: Optional[str] = None):
        super().__init__(message, stage)
        self.invariant = invariant

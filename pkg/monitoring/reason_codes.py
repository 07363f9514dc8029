"""Reason code mapping for structured calibration logs."""
from __future__ import annotations

from typing import Tuple

import errors

DEGENERATE_MOTION = "degenerate_motion"
NO_GROUND_OVERLAP = "no_ground_overlap"
NO_POLE_PAIRS = "no_pole_pairs"
EMPTY_MATCHES = "empty_matches"
MIP_GAP_LIMIT = "mip_gap_limit"
REFINE_NONCONVERGENCE = "refine_nonconvergence"
YAW_NONCONVERGENCE = "yaw_nonconvergence"
EMPTY_CONSENSUS = "empty_consensus"


def classify_error(exc: BaseException) -> Tuple[str, str]:
    """Return (reason_code, outcome) for an exception raised by a stage."""
    if isinstance(exc, errors.NonConvergence):
        return "non_convergence", "warn"
    if isinstance(exc, errors.EmptyMatches):
        return EMPTY_MATCHES, "fail"
    if isinstance(exc, (errors.NoNeighbors, errors.EmptyCandidates)):
        return "no_overlap", "fail"
    if isinstance(exc, errors.InsufficientGround):
        return "insufficient_ground", "fail"
    if isinstance(exc, (errors.ParseError, errors.ValidationError)):
        return "bad_input", "fail"
    if isinstance(exc, errors.CalibrationError):
        name = type(exc).__name__
        return "".join("_" + c.lower() if c.isupper() else c for c in name).lstrip("_"), "fail"
    return "unexpected_error", "fail"


def classify_warning(message: str) -> str:
    """Map a warning string attached to a result to its stable reason code."""
    text = message.lower()
    if "degenerate motion" in text or "excitation" in text:
        return DEGENERATE_MOTION
    if "ground" in text:
        return NO_GROUND_OVERLAP
    if "gap" in text or "node limit" in text or "time limit" in text:
        return MIP_GAP_LIMIT
    if "refine" in text and "converge" in text:
        return REFINE_NONCONVERGENCE
    if "yaw" in text and "converge" in text:
        return YAW_NONCONVERGENCE
    return "warning"

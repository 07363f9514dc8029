"""Offline calibration stages and their result containers."""

from calibration.models import CalibrationSet, Stage

__all__ = ["CalibrationSet", "Stage"]

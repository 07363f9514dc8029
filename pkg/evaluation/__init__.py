"""Calibration error metrics, text reports and distortion sweeps."""

from evaluation.metrics import (
    EvaluationReport,
    SensorError,
    evaluate,
    merge_reports,
    orientation_error,
    translation_error,
)
from evaluation.report import render_report

__all__ = [
    "EvaluationReport",
    "SensorError",
    "evaluate",
    "merge_reports",
    "orientation_error",
    "render_report",
    "translation_error",
]

"""Render human-readable calibration evaluation reports."""
from __future__ import annotations

from collections import defaultdict

from evaluation.metrics import EvaluationReport
from monitoring.reason_codes import classify_warning

TRANSLATION_LIMIT = 0.03  # m
ORIENTATION_LIMIT = 0.1  # deg


def sensor_status(translation_error: float, orientation_error: float,
                  translation_limit: float = TRANSLATION_LIMIT,
                  orientation_limit: float = ORIENTATION_LIMIT) -> str:
    """ok within the limits, warn within twice the limits, fail beyond."""
    ratio = max(translation_error / translation_limit, orientation_error / orientation_limit)
    if ratio <= 1.0:
        return "ok"
    if ratio <= 2.0:
        return "warn"
    return "fail"


def render_report(report: EvaluationReport, translation_limit: float = TRANSLATION_LIMIT,
                  orientation_limit: float = ORIENTATION_LIMIT) -> str:
    """Render a narrative report from evaluation data."""
    statuses = {
        s.sensor_id: sensor_status(s.translation_error, s.orientation_error, translation_limit, orientation_limit)
        for s in report.sensors
    }
    status_counts = defaultdict(int)
    for status in statuses.values():
        status_counts[status] += 1

    lines = []
    lines.append("Calibration Evaluation Report")
    lines.append(f"Repetitions: {report.repetitions}")
    lines.append("")

    lines.append("Summary")
    lines.append(f"- translation: {report.translation_mean * 100:.2f} cm mean, "
                 f"{report.translation_std * 100:.2f} cm std")
    lines.append(f"- orientation: {report.orientation_mean:.3f} deg mean, {report.orientation_std:.3f} deg std")
    lines.append(f"- ok: {status_counts['ok']}")
    lines.append(f"- warn: {status_counts['warn']}")
    lines.append(f"- fail: {status_counts['fail']}")
    lines.append("")

    lines.append(f"Sensors (limits {translation_limit * 100:.1f} cm / {orientation_limit:.2f} deg)")
    for entry in report.sensors:
        lines.append(
            f"- [{statuses[entry.sensor_id].upper()}] {entry.sensor_id}: "
            f"{entry.translation_error * 100:.2f} cm, {entry.orientation_error:.3f} deg "
            f"(dx {entry.dx:+.3f}, dy {entry.dy:+.3f}, dz {entry.dz:+.3f} m)"
        )
    if not report.sensors:
        lines.append("- no sensors evaluated")

    if report.warnings:
        lines.append("")
        lines.append("Warnings")
        for warning in report.warnings:
            lines.append(f"- [{classify_warning(warning)}] {warning}")

    if report.runtimes:
        lines.append("")
        lines.append("Runtimes")
        for stage, seconds in report.runtimes.items():
            lines.append(f"- {stage}: {seconds:.3f} s")

    return "\n".join(lines)

"""
Calibration error metrics against ground truth.

Translation errors are Euclidean distances in meters, orientation errors the
geodesic rotation angle in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from calibration.models import CalibrationSet
from errors import SensorMismatch
from geometry import RigidTransform, rotation_angle


@dataclass(frozen=True)
class SensorError:
    sensor_id: str
    translation_error: float  # m
    orientation_error: float  # deg
    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0

    def to_dict(self) -> dict:
        return {
            'sensor_id': self.sensor_id,
            'translation_error': self.translation_error,
            'orientation_error': self.orientation_error,
            'dx': self.dx,
            'dy': self.dy,
            'dz': self.dz,
        }


@dataclass
class EvaluationReport:
    """Per-sensor and aggregate calibration errors of one or more runs."""

    sensors: list[SensorError]

    # Aggregates over sensors (and repetitions when merged)
    translation_mean: float
    translation_std: float
    orientation_mean: float
    orientation_std: float

    runtimes: dict[str, float] = field(default_factory=dict)  # stage -> seconds
    repetitions: int = 1
    warnings: tuple[str, ...] = ()

    @property
    def max_translation_error(self) -> float:
        return max((s.translation_error for s in self.sensors), default=0.0)

    @property
    def max_orientation_error(self) -> float:
        return max((s.orientation_error for s in self.sensors), default=0.0)

    def sensor(self, sensor_id: str) -> SensorError:
        for entry in self.sensors:
            if entry.sensor_id == sensor_id:
                return entry
        raise KeyError(sensor_id)

    def __str__(self) -> str:
        lines = [
            "Calibration Errors",
            "=" * 50,
            "",
            f"  Translation:  {self.translation_mean * 100:.2f} cm (std {self.translation_std * 100:.2f} cm)",
            f"  Orientation:  {self.orientation_mean:.3f} deg (std {self.orientation_std:.3f} deg)",
            f"  Repetitions:  {self.repetitions}",
        ]
        if self.runtimes:
            lines.extend(["", "Runtimes", "-" * 30])
            for stage, seconds in self.runtimes.items():
                lines.append(f"  {stage:<12} {seconds:8.3f} s")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            'translation_mean': self.translation_mean,
            'translation_std': self.translation_std,
            'orientation_mean': self.orientation_mean,
            'orientation_std': self.orientation_std,
            'repetitions': self.repetitions,
            'runtimes': dict(self.runtimes),
            'warnings': list(self.warnings),
            'sensors': [s.to_dict() for s in self.sensors],
        }

    def to_frame(self) -> pd.DataFrame:
        """Per-sensor table, one row per sensor."""
        return pd.DataFrame([s.to_dict() for s in self.sensors])

    def to_csv(self, filepath: str):
        self.to_frame().to_csv(filepath, index=False)


def translation_error(estimate: RigidTransform, truth: RigidTransform) -> float:
    return float(np.linalg.norm(estimate.translation - truth.translation))


def orientation_error(estimate: RigidTransform, truth: RigidTransform) -> float:
    """Geodesic angle between the two rotations, degrees."""
    return math.degrees(rotation_angle(estimate, truth))


def _std(values: Sequence[float]) -> float:
    return float(np.std(values)) if len(values) > 1 else 0.0


def evaluate(calib: CalibrationSet, truth: CalibrationSet,
             runtimes: Optional[dict[str, float]] = None) -> EvaluationReport:
    """
    Compare an estimated calibration set with ground truth.

    Raises:
        SensorMismatch: the two sets do not cover the same sensors
    """
    if set(calib.sensor_ids) != set(truth.sensor_ids):
        missing = sorted(set(truth.sensor_ids) ^ set(calib.sensor_ids))
        raise SensorMismatch(f"sensor sets differ: {missing}", stage="evaluate")

    errors = []
    for sid in truth.sensor_ids:
        delta = calib[sid].translation - truth[sid].translation
        errors.append(SensorError(
            sensor_id=sid,
            translation_error=translation_error(calib[sid], truth[sid]),
            orientation_error=orientation_error(calib[sid], truth[sid]),
            dx=float(delta[0]),
            dy=float(delta[1]),
            dz=float(delta[2]),
        ))
    trans = [e.translation_error for e in errors]
    orient = [e.orientation_error for e in errors]
    return EvaluationReport(
        sensors=errors,
        translation_mean=float(np.mean(trans)) if trans else 0.0,
        translation_std=_std(trans),
        orientation_mean=float(np.mean(orient)) if orient else 0.0,
        orientation_std=_std(orient),
        runtimes=dict(runtimes or {}),
        warnings=calib.warnings,
    )


def merge_reports(reports: Sequence[EvaluationReport]) -> EvaluationReport:
    """
    Pool repeated experiments: statistics over every (repetition, sensor) error.

    Per-sensor entries are averaged over the repetitions, runtimes too.
    """
    if not reports:
        return EvaluationReport([], 0.0, 0.0, 0.0, 0.0, repetitions=0)
    table = pd.concat([r.to_frame() for r in reports], ignore_index=True)
    per_sensor = table.groupby('sensor_id', sort=False).mean(numeric_only=True)
    sensors = [
        SensorError(str(sid), float(row['translation_error']), float(row['orientation_error']),
                    float(row['dx']), float(row['dy']), float(row['dz']))
        for sid, row in per_sensor.iterrows()
    ]
    runtimes = pd.DataFrame([r.runtimes for r in reports]).mean().to_dict()
    return EvaluationReport(
        sensors=sensors,
        translation_mean=float(table['translation_error'].mean()),
        translation_std=float(table['translation_error'].std(ddof=0)),
        orientation_mean=float(table['orientation_error'].mean()),
        orientation_std=float(table['orientation_error'].std(ddof=0)),
        runtimes={k: float(v) for k, v in runtimes.items()},
        repetitions=len(reports),
        warnings=tuple(dict.fromkeys(w for r in reports for w in r.warnings)),
    )

"""
Seeded input distortions for robustness sweeps.

Amounts are meters for pole positions and ground ranges, radians for pole
orientations. poles_pose and combined apply the same numeric amount to every
component they touch.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from errors import InvalidParams
from features import FeatureFrame, FrameStreams, Pole
from simulator.scenario import random_rotation


class DistortionKind(Enum):
    POLES_POSITION = "poles_position"
    POLES_ORIENTATION = "poles_orientation"
    POLES_POSE = "poles_pose"
    POINTS_RADIAL = "points_radial"
    COMBINED = "combined"

    @property
    def moves_poles(self) -> bool:
        return self in (DistortionKind.POLES_POSITION, DistortionKind.POLES_POSE, DistortionKind.COMBINED)

    @property
    def turns_poles(self) -> bool:
        return self in (DistortionKind.POLES_ORIENTATION, DistortionKind.POLES_POSE, DistortionKind.COMBINED)

    @property
    def stretches_ground(self) -> bool:
        return self in (DistortionKind.POINTS_RADIAL, DistortionKind.COMBINED)


@dataclass(frozen=True)
class DistortionSpec:
    kind: DistortionKind
    amount: float
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.kind, str):
            try:
                object.__setattr__(self, "kind", DistortionKind(self.kind))
            except ValueError:
                raise InvalidParams(f"unknown distortion kind '{self.kind}'", stage="simulator")
        if not self.amount >= 0:
            raise InvalidParams(f"distortion amount must be >= 0, got {self.amount}", stage="simulator")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "amount": self.amount, "seed": self.seed}


def _distort_pole(pole: Pole, spec: DistortionSpec, rng: np.random.Generator) -> Pole:
    base, top = pole.base.copy(), pole.top.copy()
    if spec.kind.turns_poles:
        center = 0.5 * (base + top)
        rotation = random_rotation(rng, spec.amount)
        base = center + rotation.apply(base - center)
        top = center + rotation.apply(top - center)
    if spec.kind.moves_poles:
        shift = np.zeros(3)
        shift[:2] = rng.uniform(-spec.amount, spec.amount, size=2)
        base, top = base + shift, top + shift
    return Pole(base, top, pole.frame)


def _distort_ground(points: np.ndarray, spec: DistortionSpec, rng: np.random.Generator) -> np.ndarray:
    scale = 1.0 + rng.uniform(-spec.amount, spec.amount, size=len(points))
    return points * scale[:, None]


def apply_distortion(frames: FrameStreams, spec: DistortionSpec) -> FrameStreams:
    """
    Distorted copy of the frames; the input is left untouched.

    Sensors are visited in sorted order and frames in time order, so the
    output depends only on the frames and spec.seed.
    """
    if spec.amount == 0:
        return {sid: list(stream) for sid, stream in frames.items()}
    rng = np.random.default_rng(spec.seed)
    out: FrameStreams = {}
    for sid in sorted(frames):
        stream = []
        for frame in frames[sid]:
            poles = frame.poles
            ground = frame.ground_points
            if spec.kind.moves_poles or spec.kind.turns_poles:
                poles = tuple(_distort_pole(p, spec, rng) for p in poles)
            if spec.kind.stretches_ground:
                ground = _distort_ground(ground, spec, rng)
            stream.append(FeatureFrame(frame.sensor_id, frame.timestamp, poles, ground))
        out[sid] = stream
    return {sid: out[sid] for sid in frames}

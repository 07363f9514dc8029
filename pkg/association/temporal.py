"""
Temporal pole matching between consecutive frames of one sensor.

A pole at t-1 is matched to one at t when they are mutually closest and the
distance falls below a gate. When an increment guess is available the
current poles are first mapped into the previous sensor frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

import config
from features import FeatureFrame, Pole, FrameTag, pole_pair_distances, transform_pole_array
from geometry import RigidTransform


@dataclass(frozen=True)
class TemporalMatchSet:
    """
    Matched pole pairs of two consecutive frames, stored as aligned arrays.

    prev_poles[k] and curr_poles[k] are (2,3) [base, top] endpoints in the
    previous and current sensor frames respectively (curr_poles unmapped).
    """
    sensor_id: str
    timestamp_pair: tuple[float, float]
    prev_poles: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 3)))
    curr_poles: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 3)))
    distances: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.prev_poles)

    @property
    def pairs(self) -> list[tuple[Pole, Pole]]:
        return [
            (Pole(p[0], p[1], FrameTag.SENSOR), Pole(c[0], c[1], FrameTag.SENSOR))
            for p, c in zip(self.prev_poles, self.curr_poles)
        ]


def _pairwise_scores(prev: np.ndarray, mapped: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (forward, backward) pole distance matrices of shape (N, M)."""
    n, m = len(prev), len(mapped)
    lines = np.repeat(prev, m, axis=0)
    points = np.tile(mapped, (n, 1, 1))
    forward = pole_pair_distances(lines, points).reshape(n, m)
    backward = pole_pair_distances(points, lines).reshape(n, m)
    return forward, backward


def match_consecutive(frame_prev: FeatureFrame, frame_curr: FeatureFrame,
                      predicted_increment: Optional[RigidTransform] = None,
                      max_dist: Optional[float] = None) -> TemporalMatchSet:
    """
    Greedy mutual-nearest-neighbor matching by ascending pole distance.

    Ties are broken by (previous index, current index). A pair is accepted
    only if both directed pole distances are within max_dist, which keeps the
    matching symmetric under swapping the frames and inverting the increment.
    """
    max_dist = config.MATCH_MAX_DIST if max_dist is None else max_dist
    stamps = (frame_prev.timestamp, frame_curr.timestamp)
    prev = frame_prev.pole_array()
    curr = frame_curr.pole_array()
    if len(prev) == 0 or len(curr) == 0:
        return TemporalMatchSet(frame_curr.sensor_id, stamps)

    mapped = curr
    if predicted_increment is not None:
        mapped = transform_pole_array(predicted_increment.rotation_matrix,
                                      predicted_increment.translation, curr)

    forward, backward = _pairwise_scores(prev, mapped)
    gate = np.maximum(forward, backward)
    score = 0.5 * (forward + backward)

    rows, cols = np.nonzero(gate <= max_dist)
    order = np.lexsort((cols, rows, score[rows, cols]))

    used_prev: set[int] = set()
    used_curr: set[int] = set()
    chosen: list[tuple[int, int]] = []
    for k in order:
        i, j = int(rows[k]), int(cols[k])
        if i in used_prev or j in used_curr:
            continue
        used_prev.add(i)
        used_curr.add(j)
        chosen.append((i, j))

    if not chosen:
        return TemporalMatchSet(frame_curr.sensor_id, stamps)

    chosen.sort()
    idx_prev = np.array([i for i, _ in chosen])
    idx_curr = np.array([j for _, j in chosen])
    return TemporalMatchSet(
        sensor_id=frame_curr.sensor_id,
        timestamp_pair=stamps,
        prev_poles=prev[idx_prev],
        curr_poles=curr[idx_curr],
        distances=forward[idx_prev, idx_curr],
    )

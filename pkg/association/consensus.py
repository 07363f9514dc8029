"""
Per-pair translation consensus under a calibration guess.

For a true cross-sensor pole pair, R_A q_A + t_A = R_B q_B + t_B in the
vehicle frame. With guessed translations g the difference of the two
guessed base points is (g_A - t_A) - (g_B - t_B) for every true pair of
the two sensors, while wrong pairs scatter. The offset is the mode of all
base differences at common timestamps; the translations follow from the
offsets of all neighboring pairs by least squares.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

import config
from association.overlap import _frames_by_time, _vehicle_bases, neighbor_pairs, pair_key
from association.sensors import SensorConfig, VehicleGeometry
from calibration.models import CalibrationSet
from features import FrameStreams
from monitoring import get_run_logger

MEAN_SHIFT_ROUNDS = 3


@dataclass(frozen=True)
class PairOffset:
    """Shared difference base_a - base_b (m) of the true pairs of two sensors under the guess."""
    sensor_pair: tuple[str, str]
    offset: np.ndarray
    support: int
    votes: int

    @property
    def key(self) -> str:
        return pair_key(*self.sensor_pair)

    def to_dict(self) -> dict:
        return {
            "sensor_pair": list(self.sensor_pair),
            "offset": [float(v) for v in self.offset],
            "support": self.support,
            "votes": self.votes,
        }


def offset_mode(diffs: np.ndarray, radius: float, bin_size: float) -> tuple[np.ndarray, int]:
    """
    Densest point of (N,2) differences inside the radius.

    A 3x3-smoothed histogram picks the peak cell, then a few mean-shift rounds
    with window bin_size move to the local mean. Returns (center, support)
    where support counts differences within bin_size of the center.
    """
    diffs = np.asarray(diffs, dtype=float).reshape(-1, 2)
    if len(diffs) == 0:
        return np.zeros(2), 0
    cells = max(int(np.ceil(2.0 * radius / bin_size)), 1)
    edges = np.linspace(-radius, radius, cells + 1)
    hist, x_edges, y_edges = np.histogram2d(diffs[:, 0], diffs[:, 1], bins=[edges, edges])
    smoothed = ndimage.uniform_filter(hist, size=3, mode="constant")
    i, j = np.unravel_index(int(np.argmax(smoothed)), smoothed.shape)
    center = np.array([0.5 * (x_edges[i] + x_edges[i + 1]), 0.5 * (y_edges[j] + y_edges[j + 1])])
    for _ in range(MEAN_SHIFT_ROUNDS):
        near = np.linalg.norm(diffs - center, axis=1) <= bin_size
        if not near.any():
            break
        center = diffs[near].mean(axis=0)
    support = int(np.count_nonzero(np.linalg.norm(diffs - center, axis=1) <= bin_size))
    return center, support


def pair_offsets(frames: FrameStreams, calib_guess: CalibrationSet, sensors: Sequence[SensorConfig],
                 radius: float, bin_size: Optional[float] = None, min_support: Optional[int] = None,
                 overrides: Optional[Mapping[str, Sequence[float]]] = None) -> dict[str, PairOffset]:
    """
    Offset of every neighboring sensor pair, keyed by pair_key.

    All pole combinations of the two sensors at common timestamps vote; only
    differences within radius count. Pairs whose peak holds fewer than
    min_support votes are left out.
    """
    bin_size = config.CONSENSUS_BIN if bin_size is None else bin_size
    min_support = config.CONSENSUS_MIN_SUPPORT if min_support is None else min_support
    log = get_run_logger()
    offsets: dict[str, PairOffset] = {}
    for wedge in neighbor_pairs(sensors, calib_guess, overrides):
        id_a, id_b = wedge.sensor_pair
        by_time_a = _frames_by_time(frames.get(id_a, []))
        by_time_b = _frames_by_time(frames.get(id_b, []))
        votes = []
        for t in sorted(set(by_time_a) & set(by_time_b)):
            _, xy_a = _vehicle_bases(by_time_a[t], calib_guess)
            _, xy_b = _vehicle_bases(by_time_b[t], calib_guess)
            if len(xy_a) == 0 or len(xy_b) == 0:
                continue
            diffs = (xy_a[:, None, :] - xy_b[None, :, :]).reshape(-1, 2)
            votes.append(diffs[np.linalg.norm(diffs, axis=1) <= radius])
        diffs = np.concatenate(votes) if votes else np.zeros((0, 2))
        center, support = offset_mode(diffs, radius, bin_size)
        if support < min_support:
            log.debug("association", "weak_offset", reason=f"pair {wedge.key}",
                      outputs={"support": support, "votes": len(diffs)})
            continue
        offsets[wedge.key] = PairOffset(wedge.sensor_pair, center, support, len(diffs))
    return offsets


def translation_guess(calib_guess: CalibrationSet, offsets: Mapping[str, PairOffset],
                      vehicle: VehicleGeometry) -> CalibrationSet:
    """
    Guess with x/y translations that explain the pair offsets.

    Each offset o_AB says e_A - e_B = o_AB for the guess errors e; they are
    solved by support-weighted least squares with zero mean. The common
    shift, which no offset sees, puts the bounding box of the solved sensors
    at the center of the vehicle box. Sensors without offsets keep their
    guess; z, roll, pitch and yaw are untouched.
    """
    ids = [sid for sid in calib_guess.sensor_ids if any(sid in o.sensor_pair for o in offsets.values())]
    if not ids:
        return calib_guess
    index = {sid: k for k, sid in enumerate(ids)}
    rows, target = [], []
    for o in offsets.values():
        w = float(np.sqrt(o.support))
        row = np.zeros(len(ids))
        row[index[o.sensor_pair[0]]] = w
        row[index[o.sensor_pair[1]]] = -w
        rows.append(row)
        target.append(w * o.offset)
    rows.append(np.ones(len(ids)))
    target.append(np.zeros(2))
    errors, *_ = np.linalg.lstsq(np.array(rows), np.array(target), rcond=None)

    xy = np.array([calib_guess[sid].translation[:2] for sid in ids]) - errors
    box_center = np.array([0.5 * sum(vehicle.x_bounds), 0.5 * sum(vehicle.y_bounds)])
    xy += box_center - 0.5 * (xy.min(axis=0) + xy.max(axis=0))

    transforms = dict(calib_guess.transforms)
    for sid, (x, y) in zip(ids, xy):
        T = calib_guess[sid]
        transforms[sid] = T.with_translation((float(x), float(y), float(T.translation[2])))
    get_run_logger().debug("association", "translation_guess", outputs={
        "pairs": len(offsets),
        "sensors": {sid: [round(float(x), 4), round(float(y), 4)] for sid, (x, y) in zip(ids, xy)},
    })
    return calib_guess.replace(transforms=transforms)

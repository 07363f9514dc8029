"""Temporal pole matching, rig description and cross-sensor candidate construction."""

from association.overlap import (
    CandidatePair,
    OverlapWedge,
    build_candidates,
    candidate_arrays,
    neighbor_pairs,
    overlap_angle,
    overlap_wedge,
    pair_key,
    subsample_indices,
)
from association.consensus import PairOffset, offset_mode, pair_offsets, translation_guess
from association.sensors import SensorConfig, VehicleGeometry
from association.temporal import TemporalMatchSet, match_consecutive

__all__ = [
    'CandidatePair',
    'OverlapWedge',
    'PairOffset',
    'SensorConfig',
    'TemporalMatchSet',
    'VehicleGeometry',
    'build_candidates',
    'candidate_arrays',
    'match_consecutive',
    'neighbor_pairs',
    'offset_mode',
    'overlap_angle',
    'overlap_wedge',
    'pair_key',
    'pair_offsets',
    'subsample_indices',
    'translation_guess',
]

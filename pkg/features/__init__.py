"""Feature types (poles, ground patches, planes) and their distance metrics."""

from features.frames import FeatureFrame, FrameStreams, GroundPatch
from features.planes import (
    GROUND_PLANE,
    Plane,
    fit_plane,
    plane_angular_distance,
    plane_plane_distance,
    plane_point_distance,
    tangent_points,
    transform_plane,
)
from features.poles import (
    FrameTag,
    Pole,
    pole_pair_distances,
    pole_pair_residuals,
    pole_pole_distance,
    pole_point_distance,
    poles_to_array,
    transform_pole,
    transform_pole_array,
)

__all__ = [
    'FeatureFrame',
    'FrameStreams',
    'FrameTag',
    'GROUND_PLANE',
    'GroundPatch',
    'Plane',
    'Pole',
    'fit_plane',
    'plane_angular_distance',
    'plane_plane_distance',
    'plane_point_distance',
    'pole_pair_distances',
    'pole_pair_residuals',
    'pole_pole_distance',
    'pole_point_distance',
    'poles_to_array',
    'tangent_points',
    'transform_plane',
    'transform_pole',
    'transform_pole_array',
]

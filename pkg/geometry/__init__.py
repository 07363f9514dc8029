"""Rigid-body math on SE(3) for sensor calibration."""

from geometry.transforms import (
    EulerAngles,
    RigidTransform,
    TimedPose,
    blend,
    compose,
    conjugate_increment,
    exp_update,
    interpolate_pose,
    inverse,
    pose_log_difference,
    poses_at,
    relative_increment,
    relative_increments,
    rotation_angle,
    wrap_angle,
)

__all__ = [
    'EulerAngles',
    'RigidTransform',
    'TimedPose',
    'blend',
    'compose',
    'conjugate_increment',
    'exp_update',
    'interpolate_pose',
    'inverse',
    'pose_log_difference',
    'poses_at',
    'relative_increment',
    'relative_increments',
    'rotation_angle',
    'wrap_angle',
]

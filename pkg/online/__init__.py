"""Online calibration monitoring: windowed yaw, roll/pitch/height and x/y/yaw updates."""

from online.calibrator import OnlineCalibrator, OnlineReport, max_drift, pose_summary, step
from online.state import OnlineState
from online.updates import online_update_rph, online_update_xyyaw, online_update_yaw, solve_xyyaw

__all__ = [
    "OnlineCalibrator",
    "OnlineReport",
    "OnlineState",
    "max_drift",
    "online_update_rph",
    "online_update_xyyaw",
    "online_update_yaw",
    "pose_summary",
    "solve_xyyaw",
    "step",
]

"""Deterministic synthetic scenes for calibration experiments."""

from simulator.distortion import DistortionKind, DistortionSpec, apply_distortion
from simulator.render import RenderOptions, Rendering, render_frames
from simulator.rigs import Rig, four_sensor_rig, make_rig, ring_rig
from simulator.scenario import (
    Scenario,
    ScenarioParams,
    generate_scenario,
    perturb_mount,
    true_calibration,
)

__all__ = [
    'DistortionKind',
    'DistortionSpec',
    'RenderOptions',
    'Rendering',
    'Rig',
    'Scenario',
    'ScenarioParams',
    'apply_distortion',
    'four_sensor_rig',
    'generate_scenario',
    'make_rig',
    'perturb_mount',
    'render_frames',
    'ring_rig',
    'true_calibration',
]

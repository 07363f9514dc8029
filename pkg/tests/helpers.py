"""Shared fixtures: small turning scenarios, flat rigs and random MIP instances."""
import math
import os
import unittest
from functools import lru_cache

import numpy as np

from association import CandidatePair, SensorConfig, VehicleGeometry
from calibration.overlap_mip import MipProblem
from features import FrameTag, Pole
from geometry import RigidTransform
from monitoring import RunLogger, set_run_logger
from simulator import Rig, ScenarioParams, four_sensor_rig, generate_scenario, render_frames

SLOW = os.getenv("CALIB_SLOW_TESTS", "0") == "1"
slow = unittest.skipUnless(SLOW, "set CALIB_SLOW_TESTS=1 to run end-to-end acceptance tests")


def quiet_logger() -> RunLogger:
    """Install an in-memory logger that echoes nothing; returns it."""
    logger = RunLogger(level="quiet")
    set_run_logger(logger)
    return logger


def small_params(frames: int = 80, turns: bool = True) -> ScenarioParams:
    """
    A small loop driven for 8 seconds: one long straight, a bend, a short
    straight and the start of a second bend. Straights dominate, which keeps
    the zero-translation yaw cost sharp at the true yaw.
    """
    return ScenarioParams(
        area_size=80.0,
        pole_density=0.03,
        frames=frames,
        turns=turns,
        loop_half_length=10.0,
        loop_half_width=4.0,
        corner_radius=6.0,
    )


def flat_rig(base: Rig = None) -> Rig:
    """The rig with roll and pitch of every mount removed."""
    base = base or four_sensor_rig()
    truth = {sid: T.with_euler(roll=0.0, pitch=0.0) for sid, T in base.truth.items()}
    return Rig(base.sensors, truth, base.vehicle)


@lru_cache(maxsize=4)
def small_scenario(seed: int = 0, turns: bool = True, frames: int = 80):
    """(scenario, rendering) for a flat four-sensor rig; cached because rendering dominates."""
    scn = generate_scenario(small_params(frames, turns), seed, flat_rig())
    return scn, render_frames(scn)


def random_mip_problem(rng: np.random.Generator, candidates: int, sensors: int = 3,
                       outliers: int = 2, lam: float = 0.5, gamma: float = math.radians(5.0)) -> MipProblem:
    """
    Candidates between neighboring sensors of a random rig.

    Inliers are the same world point seen by both sensors (plus small noise);
    the first `outliers` candidates pair unrelated points.
    """
    vehicle = VehicleGeometry()
    x_lo, x_hi = vehicle.x_bounds
    y_lo, y_hi = vehicle.y_bounds
    ids = [f"s{k}" for k in range(sensors)]
    truth = {
        sid: RigidTransform.from_yaw(rng.uniform(-math.pi, math.pi),
                                     (rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi), 0.0))
        for sid in ids
    }
    cands = []
    for i in range(candidates):
        a, b = ids[i % sensors], ids[(i + 1) % sensors]
        if a > b:
            a, b = b, a
        world = np.append(rng.uniform(-15.0, 15.0, size=2), 0.0)
        other = world if i >= outliers else np.append(rng.uniform(-15.0, 15.0, size=2), 0.0)
        pa = truth[a].inverse().apply(world) + np.append(rng.normal(0.0, 0.02, size=2), 0.0)
        pb = truth[b].inverse().apply(other) + np.append(rng.normal(0.0, 0.02, size=2), 0.0)
        cands.append(CandidatePair(
            (a, b),
            Pole(pa, pa + [0, 0, 3.0], FrameTag.SENSOR),
            Pole(pb, pb + [0, 0, 3.0], FrameTag.SENSOR),
            0.0,
            i,
        ))
    used = sorted({sid for c in cands for sid in c.sensor_pair})
    index = {sid: k for k, sid in enumerate(used)}
    theta = np.array([truth[sid].yaw + rng.normal(0.0, 0.01) for sid in used])
    return MipProblem(
        sensor_ids=tuple(used),
        theta_star=theta,
        tilts=tuple(RigidTransform.identity() for _ in used),
        candidates=tuple(cands),
        q_a=np.stack([c.pole_a.base for c in cands]),
        q_b=np.stack([c.pole_b.base for c in cands]),
        ia=np.array([index[c.sensor_pair[0]] for c in cands]),
        ib=np.array([index[c.sensor_pair[1]] for c in cands]),
        x_bounds=vehicle.x_bounds,
        y_bounds=vehicle.y_bounds,
        gamma=gamma,
        lam=lam,
        big_m=2.0 * (30.0 + vehicle.diagonal),
        rho=1.0,
    )


def sensor_config(sensor_id: str, fov_deg: float = 150.0) -> SensorConfig:
    return SensorConfig(sensor_id, math.radians(fov_deg))

"""Tests for the online package: windows, the three damped updates and the replay loop."""

import json
import math
import os
import tempfile
import unittest

import numpy as np

from association import CandidatePair
from calibration.models import CalibrationSet, Stage
from calibration.settings import CalibrationSettings
from errors import OutOfRange
from features import FrameTag, Pole
from geometry import RigidTransform, TimedPose, wrap_angle
from helpers import quiet_logger, sensor_config, slow, small_scenario
from monitoring.reason_codes import DEGENERATE_MOTION, NO_POLE_PAIRS
from online import (
    OnlineCalibrator,
    OnlineReport,
    OnlineState,
    max_drift,
    online_update_xyyaw,
    pose_summary,
    solve_xyyaw,
    step,
)
from online.updates import pair_residual
from simulator import ScenarioParams, four_sensor_rig, generate_scenario, perturb_mount, render_frames, true_calibration


def pair_rig() -> CalibrationSet:
    return CalibrationSet({
        "a": RigidTransform.from_yaw(0.3, (1.0, 0.5, 1.8)),
        "b": RigidTransform.from_yaw(-0.3, (1.0, -0.5, 1.8)),
    }, Stage.FULL, 0.0)


def exact_pairs(truth: CalibrationSet, count: int = 6) -> list[CandidatePair]:
    """Poles ahead of the vehicle seen by both a and b under truth."""
    pairs = []
    for k in range(count):
        base = np.array([6.0 + k, -3.0 + k, 0.0])
        world = np.stack([base, base + [0.0, 0.0, 4.0]])
        pa, pb = truth["a"].inverse().apply(world), truth["b"].inverse().apply(world)
        pairs.append(CandidatePair(("a", "b"), Pole(pa[0], pa[1], FrameTag.SENSOR),
                                   Pole(pb[0], pb[1], FrameTag.SENSOR), 0.0, -1))
    return pairs


class TestOnlineState(unittest.TestCase):

    def setUp(self):
        quiet_logger()

    def test_initialize_requires_all_sensors(self):
        calib = pair_rig()
        with self.assertRaises(OutOfRange):
            OnlineState.initialize(calib, [sensor_config("a"), sensor_config("b"), sensor_config("c")])

    def test_initialize_sets_window_and_stage(self):
        settings = CalibrationSettings()
        settings.online.window = 7
        calib = pair_rig().replace(stage=Stage.XY_YAW)
        state = OnlineState.initialize(calib, [sensor_config("a"), sensor_config("b")], settings=settings)
        self.assertEqual(state.calibration.stage, Stage.FULL)
        self.assertEqual(state.pole_pairs.maxlen, 7)
        self.assertEqual(state.hand_eye["a"].maxlen, 7)

    def test_empty_batch_leaves_state_untouched(self):
        state = OnlineState.initialize(pair_rig(), [sensor_config("a"), sensor_config("b")])
        before = state.calibration
        state, report = step(state, {})
        self.assertFalse(report.updated)
        self.assertIs(state.calibration, before)
        self.assertEqual(state.steps, 0)

    def test_stationary_window_is_flagged(self):
        scn, rendering = small_scenario()
        state = OnlineState.initialize(true_calibration(scn), scn.sensors, scn.vehicle)
        first = {sid: frames[0] for sid, frames in rendering.frames.items()}
        report = None
        for k in range(4):
            t = 0.1 * k
            batch = {sid: frame.replace(timestamp=t) for sid, frame in first.items()}
            state, report = step(state, batch, [TimedPose(t, RigidTransform.identity())])
        for sid, frame in first.items():
            if frame.poles:
                self.assertIn(DEGENERATE_MOTION, report.health[sid], sid)

    def test_hand_eye_problem_rebuilt_after_new_samples(self):
        scn, rendering = small_scenario()
        state = OnlineState.initialize(true_calibration(scn), scn.sensors, scn.vehicle)
        batches = [{sid: frames[k] for sid, frames in rendering.frames.items()} for k in range(4)]
        state.ingest(batches[0], rendering.ego)
        for batch in batches[1:3]:
            state.ingest(batch)
        cached = {sid: state.hand_eye_problem(sid) for sid in state.sensor_ids}
        counts = {sid: len(state.hand_eye_samples(sid)) for sid in state.sensor_ids}
        for sid in state.sensor_ids:
            self.assertIs(state.hand_eye_problem(sid), cached[sid])
        state.ingest(batches[3])
        rebuilt = 0
        for sid in state.sensor_ids:
            if len(state.hand_eye_samples(sid)) > counts[sid]:
                self.assertIsNot(state.hand_eye_problem(sid), cached[sid])
                rebuilt += 1
            else:
                self.assertIs(state.hand_eye_problem(sid), cached[sid])
        self.assertGreater(rebuilt, 0)


class TestXyYawUpdate(unittest.TestCase):

    def setUp(self):
        quiet_logger()
        self.truth = pair_rig()
        self.sensors = [sensor_config("a"), sensor_config("b")]

    def test_zero_residual_gives_zero_step(self):
        state = OnlineState.initialize(self.truth, self.sensors)
        state.pole_pairs.append((0.0, exact_pairs(self.truth)))
        delta = solve_xyyaw(state)
        np.testing.assert_allclose(delta, np.zeros((2, 3)), atol=1e-9)

    def test_without_pairs_flags_sensors(self):
        state = OnlineState.initialize(self.truth, self.sensors)
        self.assertIsNone(solve_xyyaw(state))
        online_update_xyyaw(state)
        for sid in state.sensor_ids:
            self.assertIn(NO_POLE_PAIRS, state.health[sid])

    def test_update_reduces_pair_mismatch(self):
        settings = CalibrationSettings()
        settings.online.alpha = 1.0
        state = OnlineState.initialize(self.truth, self.sensors, settings=settings)
        state.pole_pairs.append((0.0, exact_pairs(self.truth)))
        shifted = self.truth["b"].with_translation(self.truth["b"].translation + [0.2, 0.0, 0.0])
        state.set_calibration(state.calibration.with_transform("b", shifted))
        before = pair_residual(state, settings)
        online_update_xyyaw(state, settings=settings)
        after = pair_residual(state, settings)
        self.assertGreater(before, 0.1)
        self.assertLess(after, 0.5 * before)

    def test_yaw_step_bounded_by_gamma(self):
        settings = CalibrationSettings()
        settings.online.rho_yaw = 0.0
        settings.online.rho_xy = 0.0
        state = OnlineState.initialize(self.truth, self.sensors, settings=settings)
        state.pole_pairs.append((0.0, exact_pairs(self.truth)))
        turned = self.truth["b"].with_euler(yaw=-0.3 + math.radians(2.0))
        state.set_calibration(state.calibration.with_transform("b", turned))
        delta = solve_xyyaw(state, settings)
        self.assertTrue(np.all(np.abs(delta[:, 2]) <= settings.mip.gamma + 1e-9))


class TestOnlineCalibrator(unittest.TestCase):

    def setUp(self):
        quiet_logger()

    def test_requires_initialize(self):
        with self.assertRaises(RuntimeError):
            OnlineCalibrator().step({})

    def test_stays_at_truth(self):
        scn, rendering = small_scenario()
        truth = true_calibration(scn)
        settings = CalibrationSettings()
        settings.online.window = 10
        calibrator = OnlineCalibrator(settings)
        calibrator.initialize(truth, scn.sensors, scn.vehicle)
        reports = calibrator.replay(rendering.ego, rendering.frames, until=1.5)
        self.assertEqual(len(reports), 16)
        self.assertTrue(all(r.updated for r in reports))
        drift_t, drift_r = max_drift(reports, truth)
        self.assertLess(drift_t, 0.01)
        self.assertLess(drift_r, 0.005)

    def test_write_reports(self):
        scn, rendering = small_scenario()
        settings = CalibrationSettings()
        settings.online.window = 5
        calibrator = OnlineCalibrator(settings)
        calibrator.initialize(true_calibration(scn), scn.sensors, scn.vehicle)
        calibrator.replay(rendering.ego, rendering.frames, until=0.3)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "online.jsonl")
            count = calibrator.write_reports(path)
            with open(path, encoding="utf-8") as f:
                rows = [json.loads(line) for line in f]
        self.assertEqual(count, 4)
        self.assertEqual([r["step"] for r in rows], [1, 2, 3, 4])
        self.assertEqual(set(rows[0]["poses"]), set(scn.rig.sensor_ids))
        self.assertIn("timings_ms", rows[0])


class TestDrift(unittest.TestCase):

    def test_max_drift(self):
        truth = pair_rig()
        moved = truth.with_transform("a", RigidTransform.from_yaw(0.31, (1.1, 0.5, 1.8)))
        report = OnlineReport(step=1, timestamp=0.0, poses=pose_summary(moved))
        drift_t, drift_r = max_drift([report], truth)
        self.assertAlmostEqual(drift_t, 0.1, places=9)
        self.assertAlmostEqual(drift_r, 0.01, places=9)


@slow
class TestOnlineTracking(unittest.TestCase):
    """
    One sensor turned by +2 deg yaw at 50 s and moved +0.1 m in y at 175 s
    during a 300 s drive. Yaw is observed absolutely through egomotion; x/y
    only relative to the neighbors, so the translation check is relative.
    """

    SENSOR = "front_left"

    def test_double_perturbation_is_tracked(self):
        quiet_logger()
        scn = generate_scenario(ScenarioParams(frames=3001), 0, four_sensor_rig())
        scn = perturb_mount(scn, self.SENSOR, RigidTransform.from_yaw(math.radians(2.0)), 50.0)
        scn = perturb_mount(scn, self.SENSOR, RigidTransform(translation=(0.0, 0.1, 0.0)), 175.0)
        rendering = render_frames(scn)

        calibrator = OnlineCalibrator(CalibrationSettings())
        calibrator.initialize(true_calibration(scn, 0.0), scn.sensors, scn.vehicle)
        reports = calibrator.replay(rendering.ego, rendering.frames)

        settled = [r for r in reports if 65.0 <= r.timestamp < 175.0 or r.timestamp >= 190.0]
        self.assertTrue(settled)
        for report in settled:
            truth = true_calibration(scn, report.timestamp)
            for sid in scn.rig.sensor_ids:
                error = abs(wrap_angle(report.poses[sid]["yaw"] - truth.yaw(sid)))
                self.assertLess(math.degrees(error), 0.2, f"{sid} at t={report.timestamp}")
        neighbors = ("front_right", "rear_left")
        for report in (r for r in reports if r.timestamp >= 190.0):
            truth = true_calibration(scn, report.timestamp)
            mine = report.poses[self.SENSOR]
            for other in neighbors:
                est = np.array([mine["x"] - report.poses[other]["x"], mine["y"] - report.poses[other]["y"]])
                ref = (truth[self.SENSOR].translation - truth[other].translation)[:2]
                self.assertLess(float(np.linalg.norm(est - ref)), 0.02, f"{other} at t={report.timestamp}")


if __name__ == '__main__':
    unittest.main()

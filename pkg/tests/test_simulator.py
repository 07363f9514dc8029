"""Tests for the simulator package: rigs, scenarios, rendering and distortions."""

import filecmp
import math
import os
import tempfile
import unittest

import numpy as np

from errors import InvalidParams, OutOfRange
from features import transform_pole_array
from geometry import RigidTransform, compose
from helpers import quiet_logger, small_params, small_scenario
from simulator import (
    DistortionKind,
    DistortionSpec,
    RenderOptions,
    ScenarioParams,
    apply_distortion,
    four_sensor_rig,
    generate_scenario,
    make_rig,
    perturb_mount,
    render_frames,
    ring_rig,
    true_calibration,
)
from streams import write_streams


class TestRigs(unittest.TestCase):

    def test_four_sensor_rig_fits_vehicle(self):
        rig = four_sensor_rig()
        (x_lo, x_hi), (y_lo, y_hi) = rig.vehicle.x_bounds, rig.vehicle.y_bounds
        self.assertEqual(len(rig.sensors), 4)
        for T in rig.truth.values():
            x, y, _ = T.translation
            self.assertTrue(x_lo <= x <= x_hi and y_lo <= y <= y_hi)

    def test_ring_rig_neighbors_overlap(self):
        rig = ring_rig()
        self.assertEqual(rig.sensor_ids, [f"s{k}" for k in range(8)])
        with self.assertRaises(InvalidParams):
            ring_rig(count=4, fov_deg=60.0)

    def test_make_rig(self):
        self.assertEqual(len(make_rig("ring").sensors), 8)
        with self.assertRaises(InvalidParams):
            make_rig("hexapod")


class TestScenario(unittest.TestCase):

    def test_params_validation(self):
        with self.assertRaises(InvalidParams):
            generate_scenario(ScenarioParams(frames=1))
        with self.assertRaises(InvalidParams):
            generate_scenario(ScenarioParams(pole_density=0.0))
        with self.assertRaises(InvalidParams):
            generate_scenario(ScenarioParams(ground_ranges=(5.0, 2.0, 1.0)))

    def test_same_seed_same_scene(self):
        a = generate_scenario(small_params(), 3)
        b = generate_scenario(small_params(), 3)
        c = generate_scenario(small_params(), 4)
        np.testing.assert_array_equal(a.poles_world, b.poles_world)
        self.assertFalse(np.array_equal(a.poles_world, c.poles_world))

    def test_trajectory_timing(self):
        scn = generate_scenario(small_params(frames=20))
        times = [p.timestamp for p in scn.trajectory]
        self.assertEqual(len(times), 20)
        self.assertAlmostEqual(times[-1], 1.9)
        step = np.linalg.norm(scn.trajectory[1].pose.translation - scn.trajectory[0].pose.translation)
        self.assertAlmostEqual(step, scn.params.speed / scn.params.rate, places=6)

    def test_straight_route_has_no_turns(self):
        scn = generate_scenario(small_params(turns=False))
        self.assertTrue(all(abs(p.pose.yaw) < 1e-12 for p in scn.trajectory))

    def test_perturb_mount(self):
        scn = generate_scenario(small_params())
        delta = RigidTransform.from_euler(0.0, 0.0, math.radians(2.0), (0.0, 0.1, 0.0))
        moved = perturb_mount(scn, "front_left", delta, 4.0)
        before, after = true_calibration(moved, 3.9), true_calibration(moved, 4.0)
        self.assertTrue(before["front_left"].allclose(scn.rig.truth["front_left"]))
        self.assertAlmostEqual(after.yaw("front_left") - before.yaw("front_left"), math.radians(2.0), places=9)
        np.testing.assert_allclose(after["front_left"].translation - before["front_left"].translation,
                                   [0.0, 0.1, 0.0], atol=1e-12)
        self.assertTrue(after["rear_left"].allclose(before["rear_left"]))
        # the original scenario is unchanged
        self.assertTrue(true_calibration(scn, 4.0)["front_left"].allclose(scn.rig.truth["front_left"]))

    def test_perturb_mount_errors(self):
        scn = generate_scenario(small_params())
        with self.assertRaises(OutOfRange):
            perturb_mount(scn, "front_left", RigidTransform.identity(), 100.0)
        with self.assertRaises(InvalidParams):
            perturb_mount(scn, "roof", RigidTransform.identity(), 1.0)


class TestRendering(unittest.TestCase):

    def test_poles_consistent_with_truth(self):
        scn, rendering = small_scenario()
        sample = rendering.ego[10]
        world = scn.poles_world
        for sensor in scn.sensors:
            frame = rendering.frames[sensor.id][10]
            if not frame.poles:
                continue
            T = compose(sample.pose, scn.mount(sensor.id, sample.timestamp))
            mapped = transform_pole_array(T.rotation_matrix, T.translation, frame.pole_array())
            nearest = [np.min(np.linalg.norm(world[:, 0, :2] - p[0, :2], axis=1)) for p in mapped]
            self.assertLess(max(nearest), 1e-9, sensor.id)

    def test_ground_points_on_vehicle_ground(self):
        scn, rendering = small_scenario()
        for sensor in scn.sensors:
            frame = rendering.frames[sensor.id][0]
            vehicle = scn.mount(sensor.id, frame.timestamp).apply(frame.ground_points)
            np.testing.assert_allclose(vehicle[:, 2], 0.0, atol=1e-9)

    def test_dropout_removes_detections(self):
        scn, rendering = small_scenario()
        dropped = render_frames(scn, RenderOptions(dropout=True, dropout_prob=0.5))
        total = sum(len(f.poles) for s in rendering.frames.values() for f in s)
        kept = sum(len(f.poles) for s in dropped.frames.values() for f in s)
        self.assertLess(kept, total)

    def test_same_seed_gives_identical_files(self):
        quiet_logger()
        with tempfile.TemporaryDirectory() as tmpdir:
            paths = []
            for name in ("a.jsonl", "b.jsonl"):
                scn = generate_scenario(small_params(frames=10), 7)
                rendering = render_frames(scn, RenderOptions(dropout=True, dropout_prob=0.2))
                path = os.path.join(tmpdir, name)
                write_streams(path, rendering.ego, rendering.frames, scn.sensors, scn.vehicle, seed=7)
                paths.append(path)
            self.assertTrue(filecmp.cmp(paths[0], paths[1], shallow=False))


class TestDistortion(unittest.TestCase):

    def setUp(self):
        _, rendering = small_scenario()
        self.frames = {sid: stream[:10] for sid, stream in rendering.frames.items()}

    def test_zero_amount_is_identity(self):
        out = apply_distortion(self.frames, DistortionSpec(DistortionKind.COMBINED, 0.0))
        for sid, stream in self.frames.items():
            for a, b in zip(stream, out[sid]):
                np.testing.assert_array_equal(a.pole_array(), b.pole_array())

    def test_seeded_determinism(self):
        spec = DistortionSpec("poles_pose", 0.1, seed=5)
        a = apply_distortion(self.frames, spec)
        b = apply_distortion(self.frames, spec)
        for sid in self.frames:
            for fa, fb in zip(a[sid], b[sid]):
                np.testing.assert_array_equal(fa.pole_array(), fb.pole_array())

    def test_position_shift_is_bounded(self):
        amount = 0.1
        out = apply_distortion(self.frames, DistortionSpec("poles_position", amount, seed=1))
        for sid, stream in self.frames.items():
            for before, after in zip(stream, out[sid]):
                if not before.poles:
                    continue
                shift = after.pole_array() - before.pole_array()
                self.assertTrue(np.all(np.abs(shift[..., :2]) <= amount + 1e-12))
                np.testing.assert_allclose(shift[..., 2], 0.0, atol=1e-12)

    def test_orientation_keeps_pole_length(self):
        out = apply_distortion(self.frames, DistortionSpec("poles_orientation", 0.2, seed=2))
        for sid, stream in self.frames.items():
            for before, after in zip(stream, out[sid]):
                for p, q in zip(before.poles, after.poles):
                    self.assertAlmostEqual(p.length, q.length, places=9)

    def test_radial_scales_ground_only(self):
        out = apply_distortion(self.frames, DistortionSpec("points_radial", 0.02, seed=3))
        for sid, stream in self.frames.items():
            before, after = stream[0], out[sid][0]
            np.testing.assert_array_equal(before.pole_array(), after.pole_array())
            ratio = np.linalg.norm(after.ground_points, axis=1) / np.linalg.norm(before.ground_points, axis=1)
            self.assertTrue(np.all(np.abs(ratio - 1.0) <= 0.02 + 1e-12))

    def test_invalid_specs(self):
        with self.assertRaises(InvalidParams):
            DistortionSpec("wind", 0.1)
        with self.assertRaises(InvalidParams):
            DistortionSpec(DistortionKind.COMBINED, -0.1)


if __name__ == '__main__':
    unittest.main()

"""Tests for geometry/transforms.py - SE(3) poses, increments and interpolation."""

import math
import unittest

import numpy as np

from errors import OutOfRange
from geometry import (
    RigidTransform,
    TimedPose,
    blend,
    compose,
    conjugate_increment,
    exp_update,
    interpolate_pose,
    pose_log_difference,
    relative_increment,
    rotation_angle,
    wrap_angle,
)


def random_transform(rng: np.random.Generator) -> RigidTransform:
    roll, pitch = rng.uniform(-0.3, 0.3, size=2)
    yaw = rng.uniform(-math.pi, math.pi)
    return RigidTransform.from_euler(roll, pitch, yaw, rng.uniform(-5.0, 5.0, size=3))


class TestRigidTransform(unittest.TestCase):
    """Construction, accessors and group operations."""

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_identity_leaves_points_unchanged(self):
        points = self.rng.normal(size=(5, 3))
        np.testing.assert_allclose(RigidTransform.identity().apply(points), points)

    def test_quaternion_is_unit_and_canonical(self):
        T = RigidTransform((0, 0, 0), (-2.0, 0.0, 0.0, 0.0))
        np.testing.assert_allclose(T.rotation, [1.0, 0.0, 0.0, 0.0])
        for _ in range(10):
            q = random_transform(self.rng).rotation
            self.assertAlmostEqual(float(np.linalg.norm(q)), 1.0, places=12)
            self.assertGreaterEqual(q[0], 0.0)

    def test_zero_quaternion_rejected(self):
        with self.assertRaises(ValueError):
            RigidTransform((0, 0, 0), (0, 0, 0, 0))

    def test_immutable(self):
        T = RigidTransform.identity()
        with self.assertRaises(AttributeError):
            T.foo = 1
        with self.assertRaises(ValueError):
            T.translation[0] = 1.0

    def test_euler_round_trip(self):
        T = RigidTransform.from_euler(0.1, -0.05, 2.0, (1, 2, 3))
        e = T.euler
        self.assertAlmostEqual(e.roll, 0.1, places=12)
        self.assertAlmostEqual(e.pitch, -0.05, places=12)
        self.assertAlmostEqual(e.yaw, 2.0, places=12)

    def test_with_euler_keeps_translation(self):
        T = RigidTransform.from_euler(0.1, 0.2, 0.3, (1, 2, 3)).with_euler(yaw=-1.0)
        self.assertAlmostEqual(T.yaw, -1.0, places=12)
        self.assertAlmostEqual(T.euler.roll, 0.1, places=12)
        np.testing.assert_allclose(T.translation, [1, 2, 3])

    def test_inverse_composes_to_identity(self):
        for _ in range(10):
            T = random_transform(self.rng)
            self.assertTrue(compose(T, T.inverse()).allclose(RigidTransform.identity(), atol=1e-9))

    def test_compose_matches_matrix_product(self):
        a, b = random_transform(self.rng), random_transform(self.rng)
        np.testing.assert_allclose((a @ b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)

    def test_compose_is_associative(self):
        for _ in range(10):
            a, b, c = (random_transform(self.rng) for _ in range(3))
            self.assertTrue(compose(compose(a, b), c).allclose(compose(a, compose(b, c)), atol=1e-9))

    def test_dict_round_trip(self):
        T = random_transform(self.rng)
        self.assertTrue(RigidTransform.from_dict(T.to_dict()).allclose(T, atol=1e-12))


class TestIncrements(unittest.TestCase):
    """Relative increments and the hand-eye conjugation."""

    def test_relative_increment_recovers_pose(self):
        rng = np.random.default_rng(3)
        a, b = random_transform(rng), random_transform(rng)
        delta = relative_increment(a, b)
        self.assertTrue(compose(a, delta).allclose(b, atol=1e-9))

    def test_conjugate_increment_satisfies_hand_eye(self):
        rng = np.random.default_rng(4)
        calib, vehicle_inc = random_transform(rng), random_transform(rng)
        sensor_inc = conjugate_increment(calib, vehicle_inc)
        left = compose(calib, sensor_inc)
        right = compose(vehicle_inc, calib)
        self.assertTrue(left.allclose(right, atol=1e-9))

    def test_conjugate_increment_of_a_chain(self):
        rng = np.random.default_rng(12)
        calib = random_transform(rng)
        first, second = random_transform(rng), random_transform(rng)
        chained = conjugate_increment(calib, compose(first, second))
        stepwise = compose(conjugate_increment(calib, first), conjugate_increment(calib, second))
        self.assertTrue(chained.allclose(stepwise, atol=1e-9))

    def test_pose_log_difference_zero_for_equal_poses(self):
        T = RigidTransform.from_euler(0.1, 0.2, 0.3, (1, 2, 3))
        np.testing.assert_allclose(pose_log_difference(T, T), np.zeros(6), atol=1e-12)

    def test_exp_update_small_rotation(self):
        T = RigidTransform.identity()
        updated = exp_update(T, [0.1, 0, 0, 0, 0, 0.01])
        np.testing.assert_allclose(updated.translation, [0.1, 0, 0])
        self.assertAlmostEqual(updated.yaw, 0.01, places=12)

    def test_rotation_angle_of_yaw_offset(self):
        a = RigidTransform.from_yaw(0.2)
        b = RigidTransform.from_yaw(-0.1)
        self.assertAlmostEqual(rotation_angle(a, b), 0.3, places=12)


class TestInterpolation(unittest.TestCase):
    """Pose stream interpolation."""

    def setUp(self):
        self.stream = [
            TimedPose(0.0, RigidTransform.from_yaw(0.0, (0, 0, 0))),
            TimedPose(1.0, RigidTransform.from_yaw(0.4, (2, 0, 0))),
        ]

    def test_midpoint(self):
        T = interpolate_pose(self.stream, 0.5)
        np.testing.assert_allclose(T.translation, [1, 0, 0], atol=1e-12)
        self.assertAlmostEqual(T.yaw, 0.2, places=12)

    def test_endpoints_exact(self):
        self.assertTrue(interpolate_pose(self.stream, 1.0).allclose(self.stream[1].pose))

    def test_outside_span_raises(self):
        with self.assertRaises(OutOfRange):
            interpolate_pose(self.stream, 1.5)
        with self.assertRaises(OutOfRange):
            interpolate_pose([], 0.0)

    def test_blend_endpoints(self):
        a, b = self.stream[0].pose, self.stream[1].pose
        self.assertTrue(blend(a, b, 0.0).allclose(a))
        self.assertTrue(blend(a, b, 1.0).allclose(b, atol=1e-12))


class TestWrapAngle(unittest.TestCase):

    def test_wrap_range(self):
        self.assertAlmostEqual(wrap_angle(3 * math.pi), math.pi)
        self.assertAlmostEqual(wrap_angle(-math.pi), math.pi)
        self.assertAlmostEqual(wrap_angle(0.5 + 4 * math.pi), 0.5)


if __name__ == '__main__':
    unittest.main()

"""Tests for features/ - pole and plane distances, plane fitting."""

import math
import unittest

import numpy as np

from errors import DegenerateGeometry, DegeneratePole, InsufficientPoints
from features import (
    FeatureFrame,
    FrameTag,
    Plane,
    Pole,
    fit_plane,
    plane_angular_distance,
    plane_plane_distance,
    plane_point_distance,
    pole_pair_distances,
    pole_pole_distance,
    pole_point_distance,
    poles_to_array,
    transform_plane,
    transform_pole,
)
from geometry import RigidTransform


class TestPoleDistances(unittest.TestCase):
    """Point-line and pole-pole distances."""

    def test_point_distance_perpendicular(self):
        pole = Pole([0, 0, 0], [0, 0, 2])
        self.assertAlmostEqual(pole_point_distance(pole, [3, 4, 1]), 5.0)

    def test_point_distance_independent_of_pole_length(self):
        short = Pole([1, 1, 0], [1, 1, 1])
        long = Pole([1, 1, 0], [1, 1, 9])
        self.assertAlmostEqual(pole_point_distance(short, [2, 1, 5]), pole_point_distance(long, [2, 1, 5]))

    def test_pole_pole_distance_parallel_offset(self):
        p = Pole([0, 0, 0], [0, 0, 3])
        q = Pole([0.3, 0.4, 0], [0.3, 0.4, 3])
        self.assertAlmostEqual(pole_pole_distance(p, q), math.hypot(0.5, 0.5))

    def test_identical_poles_zero(self):
        p = Pole([1, 2, 0], [1, 2, 4])
        self.assertAlmostEqual(pole_pole_distance(p, p), 0.0)

    def test_zero_length_pole_rejected_at_construction(self):
        with self.assertRaises(DegeneratePole):
            Pole([1, 1, 1], [1, 1, 1])
        with self.assertRaises(DegeneratePole):
            Pole([0, 0, 0], [0, 0, 1e-12], FrameTag.VEHICLE)

    def test_pole_pole_distance_example(self):
        # base (5,0,0) and top (5,0,3) both lie 5 m from the z axis
        p = Pole([0, 0, 0], [0, 0, 3])
        q = Pole([5, 0, 0], [5, 0, 3])
        self.assertAlmostEqual(pole_pole_distance(p, q), 5.0 * math.sqrt(2.0))

    def test_distance_invariant_under_rigid_transform(self):
        rng = np.random.default_rng(11)
        T = RigidTransform.from_euler(0.2, -0.1, 1.3, (4, -2, 0.5))
        for _ in range(10):
            base_p, base_q = rng.normal(size=3), rng.normal(size=3)
            p = Pole(base_p, base_p + [0.1, 0.0, 3.0])
            q = Pole(base_q, base_q + [0.0, -0.2, 2.0])
            before = pole_pole_distance(p, q)
            after = pole_pole_distance(transform_pole(T, p), transform_pole(T, q))
            self.assertAlmostEqual(before, after, delta=1e-9)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(5)
        ps = [Pole(b, b + [0, 0, 3]) for b in rng.normal(size=(4, 3))]
        qs = [Pole(b, b + [0.1, 0, 2]) for b in rng.normal(size=(4, 3))]
        vec = pole_pair_distances(poles_to_array(ps), poles_to_array(qs))
        scalar = [pole_pole_distance(p, q) for p, q in zip(ps, qs)]
        np.testing.assert_allclose(vec, scalar, atol=1e-12)

    def test_transform_retags_frame(self):
        pole = Pole([0, 0, 0], [0, 0, 1])
        self.assertEqual(transform_pole(RigidTransform.identity(), pole).frame, FrameTag.VEHICLE)
        vehicle_pole = Pole([0, 0, 0], [0, 0, 1], FrameTag.VEHICLE)
        self.assertEqual(transform_pole(RigidTransform.identity(), vehicle_pole).frame, FrameTag.WORLD)


class TestPlanes(unittest.TestCase):
    """Plane fitting and plane distances."""

    def grid(self, normal, offset=0.0):
        normal = np.asarray(normal, dtype=float)
        normal = normal / np.linalg.norm(normal)
        plane = Plane.from_point_normal(normal * offset, normal)
        u, v = np.meshgrid(np.linspace(-2, 2, 6), np.linspace(-2, 2, 6))
        return plane.point + u.reshape(-1, 1) * plane.tangent_u + v.reshape(-1, 1) * plane.tangent_v

    def test_fit_recovers_analytic_normal(self):
        for normal in ([0, 0, 1], [0.1, -0.05, 1.0], [0.3, 0.2, 0.9]):
            n = np.asarray(normal) / np.linalg.norm(normal)
            plane = fit_plane(self.grid(n, 0.7))
            np.testing.assert_allclose(plane.normal, n, atol=1e-6)
            self.assertAlmostEqual(plane_point_distance(plane, n * 0.7), 0.0, delta=1e-9)

    def test_fit_tangent_basis_right_handed(self):
        plane = fit_plane(self.grid([0.1, 0.1, 1.0]))
        np.testing.assert_allclose(np.cross(plane.tangent_u, plane.tangent_v), plane.normal, atol=1e-9)

    def test_too_few_points(self):
        with self.assertRaises(InsufficientPoints):
            fit_plane(np.zeros((2, 3)))

    def test_collinear_points(self):
        points = np.column_stack([np.linspace(0, 5, 20), np.zeros(20), np.zeros(20)])
        with self.assertRaises(DegenerateGeometry):
            fit_plane(points)

    def test_three_collinear_points_are_degenerate(self):
        points = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])
        with self.assertRaises(DegenerateGeometry):
            fit_plane(points)

    def test_too_few_planar_points(self):
        points = self.grid([0, 0, 1])[:5]
        with self.assertRaises(InsufficientPoints):
            fit_plane(points, min_points=20)

    def test_fit_rotates_with_points(self):
        points = self.grid([0.1, -0.2, 1.0], 0.4)
        T = RigidTransform.from_euler(0.3, -0.2, 1.1, (2.0, -1.0, 0.5))
        moved = fit_plane(T.apply(points))
        expected = transform_plane(T, fit_plane(points))
        # normals may differ in sign after orientation
        self.assertAlmostEqual(abs(float(np.dot(moved.normal, expected.normal))), 1.0, delta=1e-9)
        np.testing.assert_allclose(moved.point, expected.point, atol=1e-9)

    def test_angular_distance_sixty_degrees(self):
        a = Plane.from_point_normal([0, 0, 0], [0, 0, 1])
        b = Plane.from_point_normal([0, 0, 0], [math.sin(math.pi / 3), 0, math.cos(math.pi / 3)])
        self.assertAlmostEqual(plane_angular_distance(a, b), 0.5)

    def test_plane_distance_offset_planes(self):
        a = Plane.from_point_normal([0, 0, 0], [0, 0, 1])
        b = Plane.from_point_normal([0, 0, 0.2], [0, 0, 1])
        self.assertAlmostEqual(plane_plane_distance(a, b), 0.6)
        self.assertAlmostEqual(plane_angular_distance(a, b), 0.0)

    def test_angular_distance_perpendicular(self):
        a = Plane.from_point_normal([0, 0, 0], [0, 0, 1])
        b = Plane.from_point_normal([0, 0, 0], [1, 0, 0])
        self.assertAlmostEqual(plane_angular_distance(a, b), 1.0)

    def test_plane_distance_invariant_under_rigid_transform(self):
        T = RigidTransform.from_euler(0.05, 0.1, -2.0, (1, 2, 3))
        a = Plane.from_point_normal([0, 0, 0], [0.1, 0, 1])
        b = Plane.from_point_normal([0.5, 0.2, 0.3], [0, 0.05, 1])
        before = plane_plane_distance(a, b)
        after = plane_plane_distance(transform_plane(T, a), transform_plane(T, b))
        self.assertAlmostEqual(before, after, delta=1e-9)


class TestFeatureFrame(unittest.TestCase):

    def test_replace_timestamp(self):
        frame = FeatureFrame("s0", 1.0, (Pole([1, 0, 0], [1, 0, 2]),), np.zeros((4, 3)))
        moved = frame.replace(timestamp=2.0)
        self.assertEqual(moved.timestamp, 2.0)
        self.assertEqual(len(moved.poles), 1)
        self.assertEqual(moved.ground_patch.points.shape, (4, 3))


if __name__ == '__main__':
    unittest.main()

"""Tests for calibration/overlap_mip.py and calibration/branch_and_bound.py."""

import math
import os
import tempfile
import unittest

import numpy as np
from scipy import sparse

from association import VehicleGeometry
from calibration.branch_and_bound import (
    LinearModel,
    SolveStatus,
    branch_and_bound,
    relative_gap,
    solve_lp,
)
from calibration.overlap_mip import (
    MipProblem,
    build_mip,
    consensus_core,
    dump_lp,
    enumerate_mip,
    extract_feasible_pairs,
    linearization,
    seed_poses,
    solve_mip,
    solve_seeded,
)
from calibration.models import CalibrationSet
from calibration.settings import CalibrationSettings
from errors import EmptyCandidates, InvalidParams, MissingYaw, NodeLimit
from geometry import RigidTransform
from helpers import quiet_logger, random_mip_problem, slow


def knapsack_model() -> LinearModel:
    """max 5x0 + 4x1 + 3x2 s.t. 2x0 + 3x1 + x2 <= 4 (as a minimization), all binary."""
    a_ub = sparse.csr_matrix(np.array([[2.0, 3.0, 1.0]]))
    return LinearModel(
        c=np.array([-5.0, -4.0, -3.0]),
        a_ub=a_ub,
        b_ub=np.array([4.0]),
        lower=np.zeros(3),
        upper=np.ones(3),
        binary=np.arange(3),
    )


class TestBranchAndBound(unittest.TestCase):

    def test_small_knapsack(self):
        result = branch_and_bound(knapsack_model())
        self.assertEqual(result.status, SolveStatus.OPTIMAL)
        self.assertAlmostEqual(result.objective, -8.0)
        np.testing.assert_allclose(result.x, [1.0, 0.0, 1.0], atol=1e-6)
        self.assertLessEqual(result.gap, 1e-6)

    def test_infeasible_model(self):
        model = knapsack_model()
        infeasible = LinearModel(model.c, model.a_ub, np.array([-1.0]), model.lower, model.upper, model.binary)
        self.assertEqual(branch_and_bound(infeasible).status, SolveStatus.INFEASIBLE)

    def test_root_lp_is_a_lower_bound(self):
        model = knapsack_model()
        root = solve_lp(model, model.lower, model.upper)
        self.assertLessEqual(root.objective, branch_and_bound(model).objective + 1e-9)

    def test_relative_gap(self):
        self.assertEqual(relative_gap(10.0, 10.0), 0.0)
        self.assertAlmostEqual(relative_gap(10.0, 8.0), 0.2)
        self.assertAlmostEqual(relative_gap(0.5, 0.0), 0.5)
        self.assertEqual(relative_gap(float("inf"), 0.0), float("inf"))


class TestMipProblem(unittest.TestCase):

    def setUp(self):
        quiet_logger()

    def test_linearization_exact_at_expansion_point(self):
        theta = np.array([0.3, -2.0])
        m, b, m_bar, b_bar = linearization(theta)
        np.testing.assert_allclose(m * theta + b, np.sin(theta))
        np.testing.assert_allclose(m_bar * theta + b_bar, np.cos(theta))

    def test_inlier_residuals_small_at_truth(self):
        rng = np.random.default_rng(0)
        problem = random_mip_problem(rng, 6, outliers=0)
        solution = solve_mip(problem)
        self.assertEqual(solution.status, SolveStatus.OPTIMAL)
        self.assertEqual(len(solution.selected), 6)
        self.assertTrue(np.all(np.abs(solution.residuals).sum(axis=1) <= problem.lam + 1e-6))

    def test_outliers_rejected(self):
        rng = np.random.default_rng(1)
        problem = random_mip_problem(rng, 8, outliers=2, lam=0.3)
        solution = solve_mip(problem, node_limit=10_000)
        self.assertNotIn(0, solution.selected)
        self.assertNotIn(1, solution.selected)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(42)
        for trial in range(15):
            n = int(rng.integers(1, 7))
            problem = random_mip_problem(rng, n, outliers=int(rng.integers(0, n + 1)))
            solution = solve_mip(problem, node_limit=10_000)
            oracle = enumerate_mip(problem)
            tol = 1e-6 * max(1.0, abs(oracle.best.objective))
            self.assertAlmostEqual(solution.objective, oracle.best.objective, delta=tol + 1e-7, msg=f"trial {trial}")
            self.assertLessEqual(solution.gap, 1e-6)
            if oracle.is_unique:
                self.assertEqual(solution.selected, oracle.best.selected, f"trial {trial}")

    def test_node_limit_keeps_incumbent(self):
        rng = np.random.default_rng(3)
        problem = random_mip_problem(rng, 10, outliers=4)
        solution = solve_mip(problem, node_limit=1)
        self.assertIn(solution.status, (SolveStatus.GAP_LIMIT, SolveStatus.OPTIMAL))
        self.assertTrue(math.isfinite(solution.objective))
        # rejecting every candidate costs one per candidate
        self.assertLessEqual(solution.objective, problem.num_candidates + 1e-6)

    def test_strict_node_limit_raises(self):
        rng = np.random.default_rng(3)
        problem = random_mip_problem(rng, 10, outliers=4)
        try:
            solution = solve_mip(problem, node_limit=1, strict=True)
        except NodeLimit as exc:
            self.assertEqual(exc.solution.status, SolveStatus.GAP_LIMIT)
        else:
            self.assertEqual(solution.status, SolveStatus.OPTIMAL)

    def test_selection_extracts_pairs(self):
        rng = np.random.default_rng(5)
        problem = random_mip_problem(rng, 5, outliers=1)
        solution = solve_mip(problem)
        pairs = extract_feasible_pairs(solution, problem.candidates)
        self.assertEqual([p.index for p in pairs], list(solution.selected))

    def test_yaw_stays_in_trust_region(self):
        rng = np.random.default_rng(6)
        problem = random_mip_problem(rng, 6, outliers=0)
        solution = solve_mip(problem)
        for s, sid in enumerate(problem.sensor_ids):
            self.assertLessEqual(abs(solution.poses[sid][2] - problem.theta_star[s]), problem.gamma + 1e-9)

    def test_invalid_parameters(self):
        rng = np.random.default_rng(7)
        with self.assertRaises(InvalidParams):
            random_mip_problem(rng, 3, lam=-1.0)
        with self.assertRaises(InvalidParams):
            random_mip_problem(rng, 3, gamma=0.0)

    def test_dump_lp(self):
        rng = np.random.default_rng(8)
        problem = random_mip_problem(rng, 3, outliers=0)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "stage2.lp")
            dump_lp(problem, path)
            with open(path, encoding="utf-8") as f:
                text = f.read()
        for section in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
            self.assertIn(section, text)
        self.assertIn("a_2", text)


class TestBuildMip(unittest.TestCase):

    def test_empty_candidates(self):
        with self.assertRaises(EmptyCandidates):
            build_mip([], {}, VehicleGeometry())

    def test_missing_yaw(self):
        rng = np.random.default_rng(9)
        problem = random_mip_problem(rng, 3)
        with self.assertRaises(MissingYaw):
            build_mip(list(problem.candidates), {"s0": 0.0}, VehicleGeometry())

    def test_settings_flow_into_problem(self):
        rng = np.random.default_rng(10)
        source = random_mip_problem(rng, 4)
        settings = CalibrationSettings()
        settings.mip.lam = 0.2
        yaws = {sid: float(t) for sid, t in zip(source.sensor_ids, source.theta_star)}
        problem = build_mip(list(source.candidates), yaws, VehicleGeometry(), settings)
        self.assertEqual(problem.lam, 0.2)
        np.testing.assert_allclose(problem.q_a, source.q_a)


class TestSeededSolve(unittest.TestCase):
    """Stage 2 around a pose guess: core selection, fallback and warm start."""

    def setUp(self):
        quiet_logger()
        self.settings = CalibrationSettings()
        self.settings.mip.node_limit = 10_000

    def exact(self, problem: MipProblem):
        solution = solve_mip(problem, node_limit=10_000)
        seed = np.array([solution.poses[sid] for sid in problem.sensor_ids])
        return solution, seed

    def test_subset_keeps_candidate_indices(self):
        problem = random_mip_problem(np.random.default_rng(11), 6, outliers=0)
        sub = problem.subset([1, 3, 5])
        self.assertEqual(sub.num_candidates, 3)
        self.assertEqual(sub.sensor_ids, problem.sensor_ids)
        self.assertEqual(solve_mip(sub).selected, (1, 3, 5))

    def test_seed_poses_clipped_into_box_and_trust_region(self):
        problem = random_mip_problem(np.random.default_rng(12), 6)
        first = problem.sensor_ids[0]
        far = RigidTransform.from_yaw(float(problem.theta_star[0]) + 1.0, (100.0, -100.0, 0.0))
        poses = seed_poses(problem, CalibrationSet({first: far}))
        self.assertAlmostEqual(poses[0, 0], problem.x_bounds[1])
        self.assertAlmostEqual(poses[0, 1], problem.y_bounds[0])
        self.assertAlmostEqual(poses[0, 2], problem.theta_star[0] + problem.gamma)
        # a sensor missing from the guess starts at the box center
        self.assertAlmostEqual(poses[1, 0], 0.5 * sum(problem.x_bounds))
        self.assertAlmostEqual(poses[1, 1], 0.5 * sum(problem.y_bounds))
        self.assertAlmostEqual(poses[1, 2], problem.theta_star[1])

    def test_core_capped_per_sensor_pair(self):
        problem = random_mip_problem(np.random.default_rng(13), 12, outliers=0)
        core = consensus_core(problem, np.zeros((problem.num_sensors, 3)), 1e6, 2)
        self.assertEqual(len(core), 6)
        pairs = [(int(problem.ia[i]), int(problem.ib[i])) for i in core]
        for pair in set(pairs):
            self.assertLessEqual(pairs.count(pair), 2)
        self.assertEqual(list(core), sorted(core))

    def test_core_empty_when_nothing_agrees(self):
        problem = random_mip_problem(np.random.default_rng(14), 6)
        core = consensus_core(problem, np.zeros((problem.num_sensors, 3)), 1e-9, 20)
        self.assertEqual(len(core), 0)

    def test_seeded_matches_exact_solution(self):
        problem = random_mip_problem(np.random.default_rng(1), 8, outliers=2, lam=0.3)
        exact, seed = self.exact(problem)
        seeded = solve_seeded(problem, seed, self.settings)
        self.assertNotIn(0, seeded.selected)
        self.assertNotIn(1, seeded.selected)
        self.assertEqual(seeded.selected, exact.selected)
        self.assertAlmostEqual(seeded.objective, exact.objective, delta=1e-6)

    def test_empty_core_falls_back_to_full_problem(self):
        problem = random_mip_problem(np.random.default_rng(15), 6, outliers=2)
        self.settings.mip.consensus_radius = 1e-9
        seeded = solve_seeded(problem, np.zeros((problem.num_sensors, 3)), self.settings)
        oracle = enumerate_mip(problem)
        tol = 1e-6 * max(1.0, abs(oracle.best.objective))
        self.assertAlmostEqual(seeded.objective, oracle.best.objective, delta=tol + 1e-7)

    def test_seed_starts_the_search(self):
        problem = random_mip_problem(np.random.default_rng(3), 10, outliers=4)
        exact, seed = self.exact(problem)
        warm = solve_mip(problem, node_limit=1, seed=seed)
        self.assertLessEqual(warm.objective, exact.objective + 1e-6)

    def test_repeated_search_is_identical(self):
        first = branch_and_bound(knapsack_model())
        second = branch_and_bound(knapsack_model())
        np.testing.assert_array_equal(first.x, second.x)
        self.assertEqual(first.nodes, second.nodes)
        self.assertEqual(first.objective, second.objective)

@slow
class TestMipExactness(unittest.TestCase):
    """200 random instances up to 12 candidates against exhaustive enumeration."""

    def test_random_instances(self):
        quiet_logger()
        rng = np.random.default_rng(2024)
        for trial in range(200):
            n = int(rng.integers(1, 13))
            problem = random_mip_problem(rng, n, sensors=int(rng.integers(2, 5)),
                                         outliers=int(rng.integers(0, n + 1)))
            solution = solve_mip(problem, node_limit=100_000)
            oracle = enumerate_mip(problem)
            tol = 1e-6 * max(1.0, abs(oracle.best.objective))
            self.assertAlmostEqual(solution.objective, oracle.best.objective, delta=tol + 1e-7, msg=f"trial {trial}")
            self.assertLessEqual(solution.gap, 1e-6)
            if oracle.is_unique:
                self.assertEqual(solution.selected, oracle.best.selected, f"trial {trial}")


if __name__ == '__main__':
    unittest.main()

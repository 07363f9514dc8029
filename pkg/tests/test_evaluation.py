"""Tests for evaluation metrics, text reports and the distortion sweep grid."""

import math
import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from calibration.models import CalibrationSet, Stage
from errors import InvalidParams, SensorMismatch
from evaluation import evaluate, merge_reports, orientation_error, render_report, translation_error
from evaluation.report import sensor_status
from evaluation.sweep import COLUMNS, DEFAULT_AMOUNTS, parse_grid, sweep_distortions, write_sweep
from geometry import RigidTransform, compose
from helpers import quiet_logger, slow, small_params
from monitoring.reason_codes import DEGENERATE_MOTION
from simulator import DistortionKind


def truth_set() -> CalibrationSet:
    return CalibrationSet({
        "front": RigidTransform.from_euler(0.01, 0.02, 0.3, (3.5, 0.5, 1.8)),
        "rear": RigidTransform.from_euler(-0.01, 0.0, 2.9, (-0.8, -0.4, 1.7)),
    }, Stage.FULL)


class TestMetrics(unittest.TestCase):

    def test_identical_sets_have_zero_error(self):
        truth = truth_set()
        report = evaluate(truth, truth)
        self.assertEqual(report.translation_mean, 0.0)
        self.assertAlmostEqual(report.orientation_mean, 0.0, places=6)
        self.assertEqual(len(report.sensors), 2)

    def test_translation_error_is_euclidean(self):
        a = RigidTransform(translation=(0.03, 0.04, 0.0))
        self.assertAlmostEqual(translation_error(a, RigidTransform.identity()), 0.05, places=12)

    def test_orientation_error_in_degrees(self):
        a = RigidTransform.from_yaw(math.radians(0.5))
        self.assertAlmostEqual(orientation_error(a, RigidTransform.identity()), 0.5, places=9)

    def test_errors_invariant_under_common_motion(self):
        rng = np.random.default_rng(0)
        est = RigidTransform.from_euler(*rng.uniform(-0.2, 0.2, 3), rng.uniform(-1, 1, 3))
        ref = RigidTransform.from_euler(*rng.uniform(-0.2, 0.2, 3), rng.uniform(-1, 1, 3))
        motion = RigidTransform.from_euler(0.3, -0.4, 1.2, (5.0, -2.0, 1.0))
        self.assertAlmostEqual(translation_error(compose(motion, est), compose(motion, ref)),
                               translation_error(est, ref), places=9)
        self.assertAlmostEqual(orientation_error(compose(motion, est), compose(motion, ref)),
                               orientation_error(est, ref), places=6)

    def test_sensor_sets_must_match(self):
        truth = truth_set()
        partial = CalibrationSet({"front": truth["front"]})
        with self.assertRaises(SensorMismatch):
            evaluate(partial, truth)

    def test_per_sensor_offsets(self):
        truth = truth_set()
        moved = truth.with_transform("rear", truth["rear"].with_translation(truth["rear"].translation + [0, 0.1, 0]))
        report = evaluate(moved, truth)
        self.assertAlmostEqual(report.sensor("rear").dy, 0.1, places=12)
        self.assertAlmostEqual(report.max_translation_error, 0.1, places=12)
        self.assertAlmostEqual(report.max_orientation_error, 0.0, places=6)
        self.assertAlmostEqual(report.translation_mean, 0.05, places=12)

    def test_merge_pools_repetitions(self):
        truth = truth_set()
        first = evaluate(truth, truth, {"yaw": 1.0})
        moved = truth.shifted(np.array([0.02, 0.0, 0.0]))
        second = evaluate(moved, truth, {"yaw": 3.0})
        merged = merge_reports([first, second])
        self.assertEqual(merged.repetitions, 2)
        self.assertAlmostEqual(merged.translation_mean, 0.01, places=12)
        self.assertAlmostEqual(merged.runtimes["yaw"], 2.0)
        self.assertAlmostEqual(merged.sensor("front").translation_error, 0.01, places=12)

    def test_csv_has_one_row_per_sensor(self):
        truth = truth_set()
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "eval.csv")
            evaluate(truth, truth).to_csv(path)
            table = pd.read_csv(path)
        self.assertEqual(list(table["sensor_id"]), ["front", "rear"])
        self.assertIn("orientation_error", table.columns)


class TestReport(unittest.TestCase):

    def test_sensor_status(self):
        self.assertEqual(sensor_status(0.01, 0.05), "ok")
        self.assertEqual(sensor_status(0.05, 0.05), "warn")
        self.assertEqual(sensor_status(0.01, 0.5), "fail")

    def test_render_report(self):
        truth = truth_set()
        calib = truth.with_warning("sensor rear: degenerate motion, yaw unobservable")
        text = render_report(evaluate(calib, truth, {"mip": 0.5}))
        self.assertIn("[OK] front", text)
        self.assertIn(f"[{DEGENERATE_MOTION}]", text)
        self.assertIn("- mip: 0.500 s", text)


class TestSweepGrid(unittest.TestCase):

    def test_default_grid(self):
        grid = parse_grid(None)
        self.assertEqual(len(grid), len(DistortionKind) * len(DEFAULT_AMOUNTS))
        self.assertIn(("poles_position", 0.2), grid)

    def test_explicit_cells(self):
        self.assertEqual(parse_grid("poles_position=0.1,0.2; points_radial=0"),
                         [("poles_position", 0.1), ("poles_position", 0.2), ("points_radial", 0.0)])

    def test_all_kinds(self):
        grid = parse_grid("all=0.05")
        self.assertEqual({k for k, _ in grid}, {k.value for k in DistortionKind})

    def test_invalid_entries(self):
        with self.assertRaises(InvalidParams):
            parse_grid("wind=0.1")
        with self.assertRaises(InvalidParams):
            parse_grid("poles_position=lots")

    def test_reps_must_be_positive(self):
        with self.assertRaises(InvalidParams):
            sweep_distortions(grid=[("poles_position", 0.0)], reps=0)


@slow
class TestSweepRun(unittest.TestCase):

    def test_small_sweep_table(self):
        quiet_logger()
        table = sweep_distortions(small_params(), [("poles_position", 0.0), ("poles_position", 0.1)],
                                  reps=1, rig="four")
        self.assertEqual(list(table.columns), COLUMNS)
        self.assertEqual(len(table), 2)
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "sweep.csv")
            write_sweep(table, path)
            self.assertEqual(len(pd.read_csv(path)), 2)


if __name__ == '__main__':
    unittest.main()

"""
Tests for the run logger, reason codes and the error hierarchy.
"""
import io
import json
import os
import tempfile
import unittest

import errors
from monitoring import RunLogger, get_run_logger, set_run_logger
from monitoring.reason_codes import (
    DEGENERATE_MOTION,
    EMPTY_MATCHES,
    MIP_GAP_LIMIT,
    NO_GROUND_OVERLAP,
    classify_error,
    classify_warning,
)


class TestRunLogger(unittest.TestCase):

    def test_events_written_as_jsonl(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "logs", "run.jsonl")
            log = RunLogger(path, level="quiet")
            log.info("yaw", "stage", sensor="front", outputs={"yaw": 0.5})
            log.warn("mip", "gap", reason_code=MIP_GAP_LIMIT)
            with open(path, encoding="utf-8") as f:
                rows = [json.loads(line) for line in f]
        self.assertEqual([r["stage"] for r in rows], ["yaw", "mip"])
        self.assertEqual(rows[0]["sensor"], "front")
        self.assertEqual(rows[0]["outputs"], {"yaw": 0.5})
        self.assertEqual(rows[1]["level"], "warn")

    def test_level_filters_echo_not_memory(self):
        stream = io.StringIO()
        log = RunLogger(level="warn", stream=stream)
        log.info("refine", "stage")
        log.warn("refine", "not_converged", reason="stopped")
        self.assertEqual(len(log.events), 2)
        self.assertEqual([e.event for e in log.of_level("warn")], ["not_converged"])
        echoed = stream.getvalue().strip().splitlines()
        self.assertEqual(len(echoed), 1)
        self.assertIn("refine:not_converged", echoed[0])

    def test_unknown_level_rejected(self):
        with self.assertRaises(ValueError):
            RunLogger(level="loud")

    def test_timed_records_success(self):
        log = RunLogger(level="quiet")
        with log.timed("mip", "solve") as out:
            out["nodes"] = 3
        event = log.events[-1]
        self.assertEqual(event.outcome, "success")
        self.assertEqual(event.outputs, {"nodes": 3})
        self.assertGreaterEqual(event.duration_ms, 0.0)

    def test_timed_records_failure_and_reraises(self):
        log = RunLogger(level="quiet")
        with self.assertRaises(errors.EmptyMatches):
            with log.timed("yaw", "stage"):
                raise errors.EmptyMatches("no matches")
        event = log.events[-1]
        self.assertEqual(event.level, "error")
        self.assertEqual(event.reason_code, EMPTY_MATCHES)

    def test_set_run_logger_returns_previous(self):
        mine = RunLogger(level="quiet")
        previous = set_run_logger(mine)
        try:
            self.assertIs(get_run_logger(), mine)
        finally:
            set_run_logger(previous)


class TestReasonCodes(unittest.TestCase):

    def test_classify_error(self):
        self.assertEqual(classify_error(errors.NonConvergence("x")), ("non_convergence", "warn"))
        self.assertEqual(classify_error(errors.ParseError("x", 3))[0], "bad_input")
        self.assertEqual(classify_error(errors.Infeasible("x")), ("infeasible", "fail"))
        self.assertEqual(classify_error(RuntimeError("x")), ("unexpected_error", "fail"))

    def test_classify_warning(self):
        self.assertEqual(classify_warning("sensor a: degenerate motion, yaw unobservable"), DEGENERATE_MOTION)
        self.assertEqual(classify_warning("no ground overlap: plane terms skipped"), NO_GROUND_OVERLAP)
        self.assertEqual(classify_warning("something else"), "warning")


class TestErrors(unittest.TestCase):

    def test_exit_codes_distinct(self):
        classes = [c for c in vars(errors).values()
                   if isinstance(c, type) and issubclass(c, errors.CalibrationError)]
        codes = [c.exit_code for c in classes]
        self.assertEqual(len(codes), len(set(codes)))
        self.assertNotIn(0, codes)
        self.assertNotIn(2, codes)

    def test_stage_tag(self):
        exc = errors.InsufficientGround("too few points")
        self.assertEqual(exc.stage, "refine")
        self.assertEqual(str(exc.with_stage("online")), "[online] too few points")

    def test_parse_error_line_number(self):
        exc = errors.ParseError("bad record", 7)
        self.assertEqual(exc.line_number, 7)
        self.assertIn("line 7", str(exc))


if __name__ == "__main__":
    unittest.main()

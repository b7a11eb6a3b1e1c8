"""
Tests for the run logging context and the log filter that reads it.
"""

import logging

from django.test import SimpleTestCase

from fkwalk.logging_filters import RunLogFilter
from fkwalk.run_context import RunLoggingContext, log_context


class RunLoggingContextTest(SimpleTestCase):
    def test_context_set_inside_and_reset_after(self):
        record = {"run": {"seed": 1}}
        with RunLoggingContext("solve_mc", record) as ctx:
            captured = log_context.get()
        self.assertEqual(captured, {"run_id": ctx.run_id, "command": "solve_mc"})
        self.assertEqual(log_context.get(), {})

    def test_context_reset_on_exception(self):
        with self.assertRaises(RuntimeError):
            with RunLoggingContext("solve_fd"):
                raise RuntimeError("boom")
        self.assertEqual(log_context.get(), {})

    def test_run_id_is_stable_and_short(self):
        record = {"run": {"seed": 1, "walks": 200}, "grid": {"nx": 50}}
        reordered = {"grid": {"nx": 50}, "run": {"walks": 200, "seed": 1}}
        run_id = RunLoggingContext.hash_run_record(record)
        self.assertEqual(len(run_id), 8)
        self.assertEqual(run_id, RunLoggingContext.hash_run_record(reordered))
        self.assertNotEqual(run_id, RunLoggingContext.hash_run_record({"run": {"seed": 2, "walks": 200}}))

    def test_run_id_dash_without_record(self):
        self.assertEqual(RunLoggingContext.hash_run_record(None), "-")


class RunLogFilterTest(SimpleTestCase):
    def make_record(self):
        return logging.LogRecord("fkwalk", logging.INFO, __file__, 1, "message", None, None)

    def test_defaults_outside_a_run(self):
        record = self.make_record()
        self.assertTrue(RunLogFilter().filter(record))
        self.assertEqual(record.run_id, "-")
        self.assertEqual(record.command, "-")

    def test_injects_run_context(self):
        record = self.make_record()
        with RunLoggingContext("render", {"output": {"prefix": "x"}}) as ctx:
            RunLogFilter().filter(record)
        self.assertEqual(record.run_id, ctx.run_id)
        self.assertEqual(record.command, "render")

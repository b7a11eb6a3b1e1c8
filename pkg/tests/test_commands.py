import csv
import os
import tempfile
from io import StringIO
from pathlib import Path

import yaml
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from fkwalk.fkwalk.fieldio import read_field_csv, read_pgm
from fkwalk.fkwalk.management.commands.reproduce_benchmark import node_matching_size

# Small, fast runs of the benchmark domain
QUICK = {"preset": "benchmark", "nx": 9, "ny": 9, "walks": 8, "dt": 2e-3}


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def prefix(self, name: str) -> str:
        return os.path.join(self.tmp.name, name)

    def call(self, name: str, *args, **options) -> str:
        stdout = StringIO()
        call_command(name, *args, stdout=stdout, **options)
        return stdout.getvalue()

    def assertExitCode(self, code: int, name: str, *args, **options):
        with self.assertRaises(CommandError) as caught:
            self.call(name, *args, **options)
        self.assertEqual(caught.exception.returncode, code)
        return caught.exception


class SolveMcCommandTest(CommandTestCase):
    def test_writes_field_image_and_record(self):
        out = self.call("solve_mc", out=self.prefix("mc"), **QUICK)
        self.assertRegex(out, r"walks=\d+ censored=0 seconds=[\d.]+ walks_per_second=[\d.]+")
        field_grid = read_field_csv(self.prefix("mc.csv"))
        self.assertEqual(field_grid.shape, (9, 9))
        self.assertEqual(read_pgm(self.prefix("mc.pgm")).shape, (9, 9))
        record = yaml.safe_load(Path(self.prefix("mc-run.yaml")).read_text())
        self.assertEqual(record["run"]["walks"], 8)
        self.assertEqual(record["walk"]["dt"], 2e-3)
        self.assertEqual(len(record["domain"]["inclusions"]), 2)

    def test_same_seed_same_bytes(self):
        self.call("solve_mc", out=self.prefix("a"), **QUICK)
        self.call("solve_mc", out=self.prefix("b"), **QUICK)
        self.assertEqual(Path(self.prefix("a.csv")).read_bytes(), Path(self.prefix("b.csv")).read_bytes())

    def test_worker_count_same_bytes(self):
        self.call("solve_mc", out=self.prefix("w1"), workers=1, **QUICK)
        expected = Path(self.prefix("w1.csv")).read_bytes()
        for workers in (4, 8):
            with self.subTest(workers=workers):
                self.call("solve_mc", out=self.prefix(f"w{workers}"), workers=workers, **QUICK)
                self.assertEqual(Path(self.prefix(f"w{workers}.csv")).read_bytes(), expected)

    def test_config_file_and_flags(self):
        config = self.prefix("run.yaml")
        Path(config).write_text("grid:\n  nx: 5\n  ny: 7\nrun:\n  walks: 4\noutput:\n  image: false\n")
        self.call("solve_mc", config=config, dt=2e-3, ny=5, out=self.prefix("cfg"))
        self.assertEqual(read_field_csv(self.prefix("cfg.csv")).shape, (5, 5))
        self.assertFalse(os.path.exists(self.prefix("cfg.pgm")))

    def test_configuration_errors_exit_2(self):
        self.assertExitCode(2, "solve_mc", preset="nope", out=self.prefix("x"))
        self.assertExitCode(2, "solve_mc", walks=0, out=self.prefix("x"))
        self.assertExitCode(2, "solve_mc", alpha=-1.0, out=self.prefix("x"))
        self.assertExitCode(2, "solve_mc", range="1:0", out=self.prefix("x"))
        self.assertFalse(os.path.exists(self.prefix("x.csv")))

    def test_bad_config_file_exit_2(self):
        config = self.prefix("bad.yaml")
        Path(config).write_text("solver:\n  speed: 11\n")
        error = self.assertExitCode(2, "solve_mc", config=config)
        self.assertIn("solver", str(error))


class LookupCommandTest(CommandTestCase):
    def test_make_lut(self):
        out = self.call("make_lut", preset="benchmark", resolution=64, out=self.prefix("bench"))
        self.assertRegex(out, r"bytes=4112 resolution=64 halt_cells=\d+")
        self.assertEqual(os.path.getsize(self.prefix("bench.lut")), 4112)

    def test_make_lut_bad_resolution(self):
        self.assertExitCode(2, "make_lut", preset="benchmark", resolution=100, lut_out=self.prefix("x.lut"))

    def test_lut_solve(self):
        lut = self.prefix("table.lut")
        self.call("make_lut", preset="benchmark", lut_out=lut)
        out = self.call("lut_solve", lut=lut, out=self.prefix("lut"), **QUICK)
        self.assertIn("walks=", out)
        field_grid = read_field_csv(self.prefix("lut.csv"))
        self.assertTrue(field_grid.solved.any())

    def test_lut_solve_needs_table(self):
        with self.assertRaises(CommandError):
            self.call("lut_solve", **QUICK)
        self.assertExitCode(2, "lut_solve", lut=self.prefix("missing.lut"), out=self.prefix("x"), **QUICK)


class SolveFdCommandTest(CommandTestCase):
    def test_solve_fd(self):
        out = self.call("solve_fd", preset="benchmark", nx=33, out=self.prefix("fd"))
        self.assertRegex(out, r"unknowns=\d+ residual=\S+ seconds=[\d.]+")
        field_grid = read_field_csv(self.prefix("fd.csv"))
        self.assertEqual(field_grid.shape, (33, 33))
        record = yaml.safe_load(Path(self.prefix("fd-run.yaml")).read_text())
        self.assertEqual(record["fd"]["nx"], 33)
        self.assertEqual(record["grid"]["nx"], 50)

    def test_staircase_option(self):
        self.call("solve_fd", preset="benchmark", nx=17, boundary_treatment="staircase", out=self.prefix("s"))
        self.assertEqual(read_field_csv(self.prefix("s.csv")).shape, (17, 17))

    def test_fd_errors(self):
        self.assertExitCode(2, "solve_fd", preset="benchmark", nx=5, out=self.prefix("x"))
        self.assertExitCode(2, "solve_fd", preset="benchmark", nx=17, alpha=0.0, out=self.prefix("x"))
        self.assertExitCode(2, "solve_fd", preset="benchmark", nx=17, omega_x=100.0, out=self.prefix("x"))

    def test_non_convergence_exits_3(self):
        self.assertExitCode(3, "solve_fd", preset="benchmark", nx=33, tol=1e-300, max_iter=5, out=self.prefix("x"))


class CompareRenderCommandTest(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.call("solve_mc", out=self.prefix("mc"), **QUICK)
        self.call("solve_fd", preset="benchmark", nx=9, out=self.prefix("fd"))

    def test_compare(self):
        out = self.call("compare", self.prefix("mc.csv"), self.prefix("fd.csv"), out=self.prefix("cmp"))
        self.assertRegex(out, r"max_abs=\S+ mean_abs=\S+ rms=\S+")
        error = read_field_csv(self.prefix("cmp-error.csv"))
        self.assertTrue(error.solved.any())
        self.assertTrue(os.path.exists(self.prefix("cmp-error.pgm")))

    def test_compare_identity(self):
        out = self.call("compare", self.prefix("mc.csv"), self.prefix("mc.csv"), no_image=True)
        self.assertEqual(out.strip(), "max_abs=0 mean_abs=0 rms=0")
        self.assertTrue(os.path.exists(self.prefix("mc-error.csv")))
        self.assertFalse(os.path.exists(self.prefix("mc-error.pgm")))

    def test_compare_mismatch_exits_2(self):
        self.call("solve_fd", preset="benchmark", nx=17, out=self.prefix("fine"))
        self.assertExitCode(2, "compare", self.prefix("mc.csv"), self.prefix("fine.csv"))

    def test_compare_unreadable_exits_2(self):
        Path(self.prefix("junk.csv")).write_text("not,a,field\n")
        self.assertExitCode(2, "compare", self.prefix("junk.csv"), self.prefix("mc.csv"))

    def test_render(self):
        out = self.call("render", self.prefix("fd.csv"), out=self.prefix("img/fd.pgm"), range="-0.5:0.5")
        self.assertIn("width=9 height=9", out)
        self.assertEqual(read_pgm(self.prefix("img/fd.pgm")).shape, (9, 9))

    def test_render_bad_range(self):
        self.assertExitCode(2, "render", self.prefix("fd.csv"), range="0.5")


class BiasStudyCommandTest(CommandTestCase):
    def test_bias_study(self):
        out = self.call(
            "bias_study", dt_list="4e-3,2e-3", walks=1000, start="0.9,0.9", out=self.prefix("study")
        )
        self.assertIn("rows=2 naive_above_interp=pass", out)
        with open(self.prefix("study-bias.csv"), newline="") as csvfile:
            rows = list(csv.DictReader(csvfile))
        self.assertEqual([row["dt"] for row in rows], ["0.004", "0.002"])
        self.assertEqual(
            list(rows[0]), ["dt", "mean_tau_naive", "mean_tau_interp", "stderr", "stderr_interp", "n_pairs"]
        )
        for row in rows:
            self.assertGreaterEqual(float(row["mean_tau_naive"]), float(row["mean_tau_interp"]))

    def test_bias_study_errors(self):
        self.assertExitCode(2, "bias_study", dt_list="1e-3", walks=1000, out=self.prefix("x"))
        self.assertExitCode(2, "bias_study", dt_list="1e-3,2e-3", walks=1000, out=self.prefix("x"))
        self.assertExitCode(2, "bias_study", dt_list="fast,slow", out=self.prefix("x"))
        self.assertExitCode(2, "bias_study", dt_list="2e-3,1e-3", walks=10, out=self.prefix("x"))
        self.assertExitCode(2, "bias_study", dt_list="2e-3,1e-3", start="0.9", out=self.prefix("x"))


class ReproduceBenchmarkCommandTest(CommandTestCase):
    def test_node_matching_size(self):
        self.assertEqual(node_matching_size(50), (246, 5))
        self.assertEqual(node_matching_size(101), (201, 2))
        self.assertEqual(node_matching_size(5, 9), (9, 2))

    def test_reproduce_benchmark(self):
        out = self.call("reproduce_benchmark", nx=5, ny=5, walks=8, dt=2e-3, out=self.prefix("bench"))
        lines = out.strip().splitlines()
        self.assertRegex(lines[0], r"walks=\d+ censored=0")
        self.assertRegex(lines[1], r"max_abs=\S+ mean_abs=\S+ rms=\S+")
        self.assertRegex(lines[2], r"benchmark=(pass|fail)")
        for suffix in ("", "-fd", "-error"):
            self.assertEqual(read_field_csv(self.prefix(f"bench{suffix}.csv")).shape, (5, 5))
        self.assertTrue(os.path.exists(self.prefix("bench-run.yaml")))

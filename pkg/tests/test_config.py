import os
import tempfile
from pathlib import Path

import yaml
from django.test import SimpleTestCase, override_settings
from parameterized import parameterized

from fkwalk.fkwalk.config import (
    DEFAULTS,
    RunConfig,
    available_presets,
    deep_merge,
    flag_overrides,
    load_preset,
    load_run_config,
    parse_range,
    read_config_file,
    write_run_record,
)
from fkwalk.fkwalk.errors import ConfigurationError
from fkwalk.fkwalk.fdref import BoundaryTreatment
from fkwalk.fkwalk.geometry import OuterShape
from fkwalk.fkwalk.sde import ExitMode


class ConfigFileMixin:
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, text: str, name: str = "run.yaml") -> str:
        path = os.path.join(self.tmp.name, name)
        Path(path).write_text(text)
        return path


class DefaultsTest(SimpleTestCase):
    def test_defaults_resolve(self):
        config = RunConfig.from_dict({})
        self.assertEqual(config.params.alpha, 0.5)
        self.assertEqual(config.walk.dt, 1e-4)
        self.assertEqual(config.walk.exit_mode, ExitMode.INTERPOLATED)
        self.assertEqual((config.grid.nx, config.grid.ny, config.grid.extent), (50, 50, 1.0))
        self.assertEqual(config.n_walks, 200)
        self.assertEqual(config.fd.ny, 200)
        self.assertEqual(config.fd.boundary_treatment, BoundaryTreatment.CUT_CELL)
        self.assertEqual(config.domain.inclusions, ())
        self.assertEqual(config.lut_resolution, 256)

    @override_settings(FKWALK_OUTPUT_DIR="results")
    def test_default_prefix_under_output_dir(self):
        self.assertEqual(RunConfig.from_dict({}).output.prefix, os.path.join("results", "fkwalk"))

    def test_record_is_complete_and_rebuilds(self):
        config = RunConfig.from_dict({"sde": {"omega": [0.5, -0.25]}})
        record = config.to_dict()
        self.assertEqual(set(record), set(DEFAULTS))
        self.assertEqual(RunConfig.from_dict(record).to_dict(), record)
        record["sde"]["alpha"] = 3.0
        self.assertEqual(config.params.alpha, 0.5)


class ValidationTest(SimpleTestCase):
    @parameterized.expand(
        [
            ({"solver": {}},),
            ({"sde": {"beta": 1.0}},),
            ({"sde": "fast"},),
            ({"sde": {"alpha": "lots"}},),
            ({"sde": {"alpha": -1.0}},),
            ({"sde": {"omega": [1.0]}},),
            ({"walk": {"dt": 0}},),
            ({"walk": {"exit_mode": "exact"}},),
            ({"walk": {"max_steps": 10.5}},),
            ({"grid": {"nx": 1}},),
            ({"run": {"walks": 0}},),
            ({"run": {"seed": -1}},),
            ({"run": {"workers": -2}},),
            ({"domain": {"inclusions": [{"center": [0, 0], "radius": 0.2}]}},),
            ({"domain": {"inclusions": [{"center": [0.9, 0], "radius": 0.2, "value": 1}]}},),
            ({"domain": {"outer_profile": "sin_theta"}},),
            ({"domain": {"outer_shape": "hexagon"}},),
            ({"domain": {"outer_boundary_value": 2.0}},),
            ({"noise": {"mode": "pink"}},),
            ({"fd": {"tol": 0}},),
            ({"fd": {"boundary_treatment": "smooth"}},),
            ({"output": {"range": [1.0, -1.0]}},),
        ]
    )
    def test_invalid_documents(self, document):
        with self.assertRaises(ConfigurationError):
            RunConfig.from_dict(document)

    def test_yaml_exponent_strings(self):
        config = RunConfig.from_dict(yaml.safe_load("walk:\n  dt: 1e-3\nfd:\n  tol: 1e-9\n"))
        self.assertEqual(config.walk.dt, 1e-3)
        self.assertEqual(config.fd.tol, 1e-9)

    def test_inclusions(self):
        config = RunConfig.from_dict(
            {"domain": {"inclusions": [{"center": [0.1, 0.2], "radius": 0.3, "value": -0.5}]}}
        )
        (inclusion,) = config.domain.inclusions
        self.assertEqual((inclusion.center.x, inclusion.center.y), (0.1, 0.2))
        self.assertEqual(inclusion.boundary_value, -0.5)


class HelpersTest(SimpleTestCase):
    def test_parse_range(self):
        self.assertEqual(parse_range("-0.15:0.15"), (-0.15, 0.15))

    @parameterized.expand([("1",), ("1:0",), ("a:b",), ("0:1:2",)])
    def test_parse_bad_range(self, text):
        with self.assertRaises(ConfigurationError):
            parse_range(text)

    def test_deep_merge_does_not_mutate(self):
        base = {"sde": {"alpha": 0.5, "omega": [0, 0]}}
        merged = deep_merge(base, {"sde": {"alpha": 1.0}})
        self.assertEqual(merged, {"sde": {"alpha": 1.0, "omega": [0, 0]}})
        self.assertEqual(base["sde"]["alpha"], 0.5)

    def test_flag_overrides(self):
        document = flag_overrides({"nx": 80, "walks": None, "omega_y": 0.3, "range": "-2:2", "exit_mode": "naive"})
        self.assertEqual(
            document,
            {
                "grid": {"nx": 80},
                "sde": {"omega": [None, 0.3]},
                "output": {"range": [-2.0, 2.0]},
                "walk": {"exit_mode": "naive"},
            },
        )

    def test_flag_overrides_grid_section(self):
        self.assertEqual(flag_overrides({"nx": 65, "ny": 33}, grid_section="fd"), {"fd": {"nx": 65, "ny": 33}})


class PresetTest(SimpleTestCase):
    def test_shipped_presets(self):
        self.assertEqual(available_presets(), ["benchmark", "harmonic-disk", "screened-disk"])

    @parameterized.expand([("benchmark",), ("harmonic-disk",), ("screened-disk",)])
    def test_presets_resolve(self, name):
        load_run_config(preset=name)

    def test_benchmark_preset(self):
        config = load_run_config(preset="benchmark")
        self.assertEqual(len(config.domain.inclusions), 2)
        self.assertEqual(config.domain.inclusions[0].boundary_value, -1.0)
        self.assertEqual(config.walk.dt, 1e-4)
        self.assertEqual(config.n_walks, 200)
        self.assertEqual(config.output.error_range, (-0.15, 0.15))

    def test_disk_presets(self):
        self.assertEqual(load_run_config(preset="harmonic-disk").domain.outer_shape, OuterShape.DISK)
        self.assertEqual(load_run_config(preset="screened-disk").params.sigma_abs, 1.0)

    def test_unknown_preset(self):
        with self.assertRaisesMessage(ConfigurationError, "benchmark"):
            load_preset("nope")


class LayeringTest(ConfigFileMixin, SimpleTestCase):
    def test_flags_beat_file_beat_preset(self):
        path = self.write_config("run:\n  walks: 50\n  seed: 9\nsde:\n  omega: [0.5, 0.5]\n")
        config = load_run_config(preset="benchmark", config_path=path, options={"seed": 4, "omega_x": 0.1})
        self.assertEqual(config.n_walks, 50)
        self.assertEqual(config.seed, 4)
        self.assertEqual(config.params.omega, (0.1, 0.5))
        self.assertEqual(len(config.domain.inclusions), 2)

    def test_grid_flags_can_target_fd(self):
        config = load_run_config(options={"nx": 65}, grid_section="fd")
        self.assertEqual((config.fd.nx, config.fd.ny), (65, 65))
        self.assertEqual(config.grid.nx, 50)

    def test_bad_files(self):
        with self.assertRaises(ConfigurationError):
            read_config_file(os.path.join(self.tmp.name, "missing.yaml"))
        with self.assertRaises(ConfigurationError):
            read_config_file(self.write_config("sde: [unclosed\n"))
        with self.assertRaises(ConfigurationError):
            read_config_file(self.write_config("- just\n- a list\n"))

    def test_empty_file_is_defaults(self):
        self.assertEqual(read_config_file(self.write_config("")), {})

    def test_run_record_round_trip(self):
        config = load_run_config(preset="benchmark", options={"walks": 10})
        path = os.path.join(self.tmp.name, "record.yaml")
        write_run_record(config, path)
        again = load_run_config(config_path=path)
        self.assertEqual(again.to_dict(), config.to_dict())

import math

import numpy as np
from django.test import SimpleTestCase
from parameterized import parameterized

from fkwalk.fkwalk.errors import ConfigurationError, UsageError
from fkwalk.fkwalk.geometry import Point2
from fkwalk.fkwalk.machine import (
    MachineModel,
    NoiseConfig,
    NoiseSource,
    check_overload,
    quantize_readout,
    sample_increment,
)
from fkwalk.fkwalk.utils.seeding import combine


class MachineModelTest(SimpleTestCase):
    def setUp(self):
        self.model = MachineModel()

    @parameterized.expand(
        [
            ("rounds_down", 0.12344, 0.1234),
            ("rounds_up", -0.12346, -0.1235),
            ("clamps_high", 1.5, 1.0),
            ("clamps_low", -3.0, -1.0),
            ("exact", 0.5, 0.5),
        ]
    )
    def test_quantize_readout(self, _name, value, expected):
        self.assertAlmostEqual(quantize_readout(self.model, value), expected, places=12)

    def test_zero_quantum_only_clamps(self):
        model = MachineModel(readout_quantum=0.0)
        self.assertEqual(quantize_readout(model, 0.123456789), 0.123456789)

    @parameterized.expand(
        [
            ("inside", 0.5, -0.5, False),
            ("on_limit", 1.0, 1.0, False),
            ("x_over", 1.2, 0.0, True),
            ("y_under", 0.0, -1.01, True),
        ]
    )
    def test_check_overload(self, _name, x, y, expected):
        self.assertEqual(check_overload(self.model, Point2(x, y)), expected)

    def test_overload_can_be_disabled(self):
        self.assertFalse(check_overload(MachineModel(overload_enabled=False), Point2(5.0, 0.0)))

    def test_invalid_model(self):
        with self.assertRaises(ConfigurationError):
            MachineModel(range_limit=0.0)
        with self.assertRaises(ConfigurationError):
            MachineModel(readout_quantum=-1e-4)


class IdealNoiseTest(SimpleTestCase):
    def setUp(self):
        self.seeds = combine(9, np.arange(20_000))

    def test_increment_variance_is_dt(self):
        dt = 1e-3
        dwx, dwy = NoiseSource(self.seeds).sample_block(dt, 4)
        self.assertEqual(dwx.shape, (4, 20_000))
        for dw in (dwx, dwy):
            self.assertLess(abs(dw.var() / dt - 1.0), 0.03)
            self.assertLess(abs(dw.mean()) / math.sqrt(dt), 0.02)

    def test_axes_are_uncorrelated(self):
        dwx, dwy = sample_increment(NoiseSource(self.seeds), 1e-2)
        self.assertLess(abs(np.corrcoef(dwx, dwy)[0, 1]), 0.03)

    def test_block_matches_single_steps(self):
        block_x, block_y = NoiseSource(self.seeds[:50]).sample_block(1e-2, 3)
        source = NoiseSource(self.seeds[:50])
        for k in range(3):
            dwx, dwy = source.sample_increment(1e-2)
            np.testing.assert_array_equal(dwx, block_x[k])
            np.testing.assert_array_equal(dwy, block_y[k])

    def test_subset_draws_match_full_draws(self):
        full = NoiseSource(self.seeds[:10])
        partial = NoiseSource(self.seeds[:10])
        full.sample_increment(1e-2)
        partial.sample_increment(1e-2, np.array([0, 3]))
        dwx_full, _ = full.sample_increment(1e-2)
        dwx_part, _ = partial.sample_increment(1e-2, np.array([3, 7]))
        np.testing.assert_array_equal(dwx_part, dwx_full[[3, 7]])

    def test_non_positive_dt(self):
        with self.assertRaises(UsageError):
            NoiseSource(self.seeds).sample_increment(0.0)


class BiasedNoiseTest(SimpleTestCase):
    def test_bias_is_tracked_out(self):
        config = NoiseConfig(mode="biased", dc_bias=(0.5, -0.25), highpass_time_constant=0.01)
        source = config.source(combine(4, np.arange(2000)))
        dt = 1e-3
        first_x, first_y = source.sample_increment(dt)
        self.assertAlmostEqual(first_x.mean() / math.sqrt(dt), 0.5, delta=0.1)
        self.assertAlmostEqual(first_y.mean() / math.sqrt(dt), -0.25, delta=0.1)
        for _ in range(300):
            dwx, dwy = source.sample_increment(dt)
        self.assertLess(abs(dwx.mean() / math.sqrt(dt)), 0.1)
        self.assertLess(abs(dwy.mean() / math.sqrt(dt)), 0.1)
        np.testing.assert_allclose(source.bias_state.mean(axis=1), [0.5, -0.25], atol=0.05)

    def test_bias_estimate_converges_within_one_percent(self):
        config = NoiseConfig(mode="biased", dc_bias=(0.5, -0.25), highpass_time_constant=0.01)
        source = config.source(combine(6, np.arange(20_000)))
        dt = 1e-4
        for _ in range(round(10 * config.highpass_time_constant / dt)):
            source.sample_increment(dt)
        np.testing.assert_allclose(source.bias_state.mean(axis=1), config.dc_bias, rtol=0.01)

    def test_block_sampling_needs_ideal_source(self):
        source = NoiseConfig(mode="biased").source([1, 2])
        with self.assertRaises(UsageError):
            source.sample_block(1e-3, 2)

    def test_invalid_config(self):
        with self.assertRaises(ConfigurationError):
            NoiseConfig(highpass_time_constant=0.0)
        with self.assertRaises(ValueError):
            NoiseConfig(mode="pink")

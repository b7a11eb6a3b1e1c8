import numpy as np
from django.test import SimpleTestCase

from fkwalk.fkwalk.utils.seeding import (
    GOLDEN_GAMMA,
    combine,
    counter_normals,
    counter_uniforms,
    mix64,
)


class Mix64Test(SimpleTestCase):
    def test_first_splitmix64_output_for_zero_state(self):
        self.assertEqual(int(mix64(GOLDEN_GAMMA)), 0xE220A8397B1DCDAF)

    def test_mix_is_elementwise(self):
        values = np.arange(5, dtype=np.uint64)
        mixed = mix64(values)
        for i in range(5):
            self.assertEqual(int(mixed[i]), int(mix64(np.uint64(i))))


class CombineTest(SimpleTestCase):
    def test_pure_function(self):
        self.assertEqual(int(combine(7, 1, 2, 3)), int(combine(7, 1, 2, 3)))

    def test_key_order_matters(self):
        self.assertNotEqual(int(combine(7, 1, 2, 3)), int(combine(7, 2, 1, 3)))

    def test_broadcasts_array_keys(self):
        seeds = combine(1, np.arange(4)[:, None], np.arange(3)[None, :])
        self.assertEqual(seeds.shape, (4, 3))
        self.assertEqual(int(seeds[2, 1]), int(combine(1, 2, 1)))


class CounterDrawTest(SimpleTestCase):
    def setUp(self):
        self.seeds = combine(42, np.arange(100_000))

    def test_uniforms_in_open_interval(self):
        u = counter_uniforms(self.seeds, 0)
        self.assertTrue(np.all(u > 0.0))
        self.assertTrue(np.all(u < 1.0))

    def test_normals_have_unit_moments(self):
        z = counter_normals(self.seeds, 3)
        self.assertTrue(np.isfinite(z).all())
        self.assertLess(abs(z.mean()), 0.02)
        self.assertLess(abs(z.std() - 1.0), 0.02)

    def test_counters_give_independent_draws(self):
        a = counter_normals(self.seeds, 0)
        b = counter_normals(self.seeds, 1)
        self.assertLess(abs(np.corrcoef(a, b)[0, 1]), 0.02)

    def test_draw_depends_only_on_seed_and_counter(self):
        full = counter_normals(self.seeds, 5)
        subset = counter_normals(self.seeds[[10, 20]], 5)
        np.testing.assert_array_equal(subset, full[[10, 20]])

    def test_stream_has_no_lag_one_correlation(self):
        n = 1_000_000
        z = counter_normals(combine(3), np.arange(n, dtype=np.uint64))
        rho = np.corrcoef(z[:-1], z[1:])[0, 1]
        self.assertLess(abs(rho), 4.0 / np.sqrt(n))

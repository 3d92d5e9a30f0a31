"""Test the smooth truncation family."""

import unittest

import numpy as np

from hjb_actor_critic.choices import TruncationModeChoices
from hjb_actor_critic.errors import ConfigurationError
from hjb_actor_critic.truncation import HALF_SQRT_PI, TruncationFamily


class TestTruncationFamily(unittest.TestCase):
    """Test TruncationFamily."""

    def setUp(self):
        self.family = TruncationFamily.for_width(1024, 0.75)
        self.x = np.linspace(-20.0, 20.0, 4001)

    def test_default_delta(self):
        self.assertAlmostEqual(0.05, self.family.delta)
        self.assertAlmostEqual(1024**0.05, self.family.threshold)

    def test_identity_inside_threshold(self):
        inside = self.x[np.abs(self.x) <= self.family.threshold]
        got = self.family(inside)
        np.testing.assert_array_equal(inside, got.psi)
        np.testing.assert_array_equal(np.ones_like(inside), got.psi_prime)

    def test_saturation(self):
        got = self.family(self.x)
        self.assertTrue(np.all(np.abs(got.psi) <= self.family.threshold + HALF_SQRT_PI))
        self.assertAlmostEqual(self.family.threshold + HALF_SQRT_PI, float(got.psi[-1]), places=12)
        self.assertTrue(np.all(got.psi_prime > 0.0))
        self.assertTrue(np.all(got.psi_prime <= 1.0))
        np.testing.assert_allclose(got.F, got.psi * got.psi_prime)

    def test_distance_from_identity(self):
        got = self.family(self.x)
        outside = np.abs(self.x) >= self.family.threshold
        self.assertTrue(np.all(np.abs(got.psi - self.x) <= np.abs(self.x) * outside + 1e-15))

    def test_derivative_matches_finite_difference(self):
        x = np.array([-3.0, -1.5, 1.2, 2.5])
        step = 1e-6
        want = (self.family(x + step).psi - self.family(x - step).psi) / (2 * step)
        np.testing.assert_allclose(self.family(x).psi_prime, want, rtol=1e-6, atol=1e-9)

    def test_identity_mode(self):
        family = TruncationFamily.for_width(64, 0.75, mode=TruncationModeChoices.IDENTITY)
        got = family(self.x)
        np.testing.assert_array_equal(self.x, got.psi)
        np.testing.assert_array_equal(self.x, got.F)

    def test_invalid_delta(self):
        with self.assertRaises(ConfigurationError):
            TruncationFamily.for_width(64, 0.75, delta=0.1)
        with self.assertRaises(ConfigurationError):
            TruncationFamily(0.0, 64)
        with self.assertRaises(ConfigurationError):
            TruncationFamily(0.05, 0)


class TestTruncationShape(unittest.TestCase):
    """Monotonicity and bounds on dense grids for small and large widths."""

    def test_properties(self):
        x = np.linspace(-50.0, 50.0, 20001)
        for width in (10, 1000):
            with self.subTest(width=width):
                family = TruncationFamily.for_width(width, 0.75)
                got = family(x)
                self.assertTrue(np.all(np.diff(got.psi) >= 0.0))
                self.assertTrue(np.all(np.abs(got.psi) <= 2.0 * family.threshold))
                lipschitz = np.max(np.abs(np.diff(got.F)) / np.diff(x))
                self.assertLess(lipschitz, 2.0 * family.threshold + 1.0)

"""Test optimizers and learning rate schedules."""

import unittest

import numpy as np

from hjb_actor_critic.choices import OptimizerChoices, SchedulerChoices
from hjb_actor_critic.errors import ConfigurationError
from hjb_actor_critic.nn import NetParams
from hjb_actor_critic.optim import SGD, Adam, make_optimizer, scheduled_rate


def _params(value):
    return NetParams(np.full((1, 3), value), np.full((3, 2), value), np.full(3, value))


class TestOptimizers(unittest.TestCase):
    """Test SGD and Adam."""

    def test_sgd(self):
        got = SGD().step(_params(1.0), _params(2.0), 0.25)
        np.testing.assert_allclose(got.to_vector(), 0.5)

    def test_adam_first_step(self):
        grad = NetParams(np.array([[3.0, -0.5, 2.0]]), np.full((3, 2), -7.0), np.array([1e-3, -1e-3, 4.0]))
        got = Adam().step(_params(0.0), grad, 0.01)
        np.testing.assert_allclose(got.to_vector(), -0.01 * np.sign(grad.to_vector()), rtol=1e-4)

    def test_adam_keeps_state(self):
        optimizer = Adam()
        params = _params(1.0)
        for _ in range(3):
            params = optimizer.step(params, _params(1.0), 0.1)
        self.assertEqual(3, optimizer.t)
        np.testing.assert_allclose(params.to_vector(), 0.7, rtol=1e-6)

    def test_adam_invalid(self):
        with self.assertRaises(ConfigurationError):
            Adam(beta1=1.0)

    def test_make_optimizer(self):
        self.assertIsInstance(make_optimizer(OptimizerChoices.ADAM), Adam)
        self.assertIsInstance(make_optimizer("sgd"), SGD)


class TestSchedule(unittest.TestCase):
    """Test scheduled_rate."""

    def test_rates(self):
        self.assertEqual(0.1, scheduled_rate(0.1, 9, SchedulerChoices.CONSTANT))
        self.assertAlmostEqual(0.01, scheduled_rate(0.1, 9, SchedulerChoices.INVERSE_CYCLE))
        self.assertEqual(0.1, scheduled_rate(0.1, 0, SchedulerChoices.INVERSE_CYCLE))

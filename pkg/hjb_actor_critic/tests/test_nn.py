"""Test shallow networks, critic and actor wrappers, and checkpoints."""

import json
import os
import tempfile
import unittest

import numpy as np

from hjb_actor_critic.domains import sample_boundary, sample_interior
from hjb_actor_critic.errors import CheckpointError, ConfigurationError
from hjb_actor_critic.nn import (
    ActorPolicy,
    InitSpec,
    NetField,
    NetParams,
    ShallowNet,
    critic_derivatives,
    critic_forward,
    fit_to_targets,
    init_net,
    load_checkpoint,
    save_checkpoint,
)
from hjb_actor_critic.problems import preset
from hjb_actor_critic.tests.util import central_difference, relative_error, small_net


class TestShallowNet(unittest.TestCase):
    """Test ShallowNet."""

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_forward_matches_definition(self):
        net = small_net(width=8, d=3, k=2)
        X = self.rng.standard_normal((4, 3))
        want = 8**-0.75 * np.tanh(X @ net.inner.T + net.bias) @ net.outer.T
        np.testing.assert_allclose(net.forward(X), want)

    def test_init_is_reproducible(self):
        first = init_net(32, 4, 1, 0.75, InitSpec(5))
        second = init_net(32, 4, 1, 0.75, InitSpec(5))
        np.testing.assert_array_equal(first.inner, second.inner)
        self.assertTrue(np.all(np.abs(first.outer) <= 1.0))

    def test_invalid_construction(self):
        with self.assertRaises(ConfigurationError):
            init_net(0, 2, 1)
        with self.assertRaises(ConfigurationError):
            init_net(8, 2, 1, beta=1.0)
        net = small_net()
        with self.assertRaises(ConfigurationError):
            ShallowNet(net.outer, net.inner[:4], net.bias, 0.75)
        with self.assertRaises(ConfigurationError):
            ShallowNet(net.outer * np.nan, net.inner, net.bias, 0.75)
        with self.assertRaises(ConfigurationError):
            InitSpec(outer_dist="normal")

    def test_input_derivatives(self):
        net = small_net(width=64, d=5, seed=2)
        field = NetField(net)
        X = self.rng.uniform(-1, 1, size=(3, 5))
        for row, x in enumerate(X):
            grad = central_difference(lambda z: field.value(z[None, :])[0], x)
            hess = central_difference(lambda z: field.grad(z[None, :])[0], x)
            self.assertLess(relative_error(field.grad(X)[row], grad), 1e-6)
            self.assertLess(relative_error(field.hess(X)[row], hess), 1e-6)
        A = self.rng.standard_normal((3, 5))
        want = np.einsum("mi,mij,mj->m", A, field.hess(X), A)
        self.assertLess(relative_error(field.hess_quad(X, A), want), 1e-12)

    def test_parameter_gradients(self):
        net = small_net(width=12, d=3, k=2, seed=4)
        X = self.rng.uniform(-1, 1, size=(6, 3))
        weights = self.rng.standard_normal((6, 2))
        got = net.param_gradient_accumulate(X, weights)

        def objective(params):
            return float(np.sum(weights * net.with_params(params).forward(X)))

        base = net.params
        for name in ("outer", "inner", "bias"):
            with self.subTest(parameter=name):

                def along(array, name=name):
                    params = base.copy()
                    setattr(params, name, array)
                    return objective(params)

                want = central_difference(along, getattr(base, name))
                self.assertLess(relative_error(getattr(got, name), want), 1e-6)

    def test_apply_update(self):
        net = small_net()
        update = net.params * 2.0
        net.apply_update(update)
        np.testing.assert_array_equal(update.outer, net.outer)


class TestNetParams(unittest.TestCase):
    """Test NetParams arithmetic helpers."""

    def test_vector_round_trip(self):
        params = small_net(width=5, d=2, k=3).params
        again = params.from_vector(params.to_vector())
        np.testing.assert_array_equal(params.inner, again.inner)
        self.assertEqual(5 * 3 + 5 * 2 + 5, params.to_vector().size)

    def test_max_abs(self):
        params = NetParams(np.array([[1.0, -3.0]]), np.array([[0.5], [-0.25]]), np.array([2.0, 0.0]))
        self.assertEqual(3.0, params.max_abs())
        self.assertEqual({"outer": 3.0, "inner": 0.5, "bias": 2.0}, params.max_abs_by_class())
        self.assertEqual(0.0, (params - params).max_abs())
        self.assertFalse((params * np.inf).is_finite())


class TestCriticAndActor(unittest.TestCase):
    """Test CriticNet and ActorPolicy."""

    def setUp(self):
        self.problem = preset("problem1", 3)
        self.rng = np.random.default_rng(2)

    def test_boundary_condition_is_exact(self):
        net = init_net(32, 3, 1, 0.75, InitSpec(9))
        net.apply_update(net.params * 50.0)
        critic = self.problem.make_critic(net)
        X = sample_boundary(self.problem.domain, 10000, self.rng)
        self.assertLess(np.max(np.abs(critic.value(X) - self.problem.boundary(X))), 1e-12)

    def test_critic_derivatives(self):
        critic = self.problem.init_critic(32, 0.75, 1)
        x = np.array([0.1, 0.2, -0.3])
        derivatives = critic_derivatives(critic, x)
        self.assertAlmostEqual(critic_forward(critic, x), derivatives.value)
        a = np.array([0.3, -0.1, 0.2])
        s = np.array([1.0, 2.0, 0.5])
        H = critic.hess(x[None, :])[0]
        want = a @ H @ a + 2.0 * s @ derivatives.grad
        self.assertAlmostEqual(want, derivatives.dir2(a, s), places=12)

    def test_critic_parameter_gradient(self):
        critic = self.problem.init_critic(16, 0.75, 3)
        X = sample_interior(self.problem.domain, 5, self.rng)
        weights = self.rng.standard_normal(5)
        got = critic.param_gradient_accumulate(X, weights)
        base = critic.z_net.params

        def objective(bias):
            params = base.copy()
            params.bias = bias
            moved = self.problem.make_critic(critic.z_net.with_params(params))
            return -float(weights @ moved.value(X))

        self.assertLess(relative_error(got.bias, central_difference(objective, base.bias)), 1e-6)

    def test_actor_clamp(self):
        net = init_net(8, 2, 2, 0.75, InitSpec(0))
        net.apply_update(net.params * 100.0)
        actor = ActorPolicy(net, (-0.5, 0.5))
        X = self.rng.uniform(-1, 1, size=(50, 2))
        actions = actor(X)
        self.assertTrue(np.all(np.abs(actions) <= 0.5))
        mask = actor.clamp_mask(X)
        np.testing.assert_array_equal(mask, (np.abs(net.forward(X)) <= 0.5).astype(float))
        weights = np.ones((50, 2))
        got = actor.param_gradient_accumulate(X, weights)
        want = net.param_gradient_accumulate(X, mask)
        np.testing.assert_allclose(got.outer, want.outer)

    def test_dimension_mismatch(self):
        with self.assertRaises(ConfigurationError):
            self.problem.make_actor(init_net(8, 2, 3))
        with self.assertRaises(ConfigurationError):
            self.problem.make_critic(init_net(8, 3, 2))

    def test_fit_to_targets(self):
        net = init_net(128, 1, 1, 0.75, InitSpec(0))
        X = np.linspace(-1, 1, 200).reshape(-1, 1)
        fitted = fit_to_targets(net, X, np.sin(2 * X))
        self.assertLess(np.max(np.abs(fitted.forward(X) - np.sin(2 * X))), 1e-3)
        np.testing.assert_array_equal(net.inner, fitted.inner)


class TestCheckpoints(unittest.TestCase):
    """Test checkpoint files."""

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()  # pylint: disable=consider-using-with
        self.path = os.path.join(self.tmpdir.name, "critic.json")

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_save_and_load(self):
        problem = preset("problem1", 2)
        critic = problem.init_critic(8, 0.6, 4)
        save_checkpoint(self.path, critic, problem.name)
        checkpoint = load_checkpoint(self.path)
        self.assertEqual(("critic", "problem1"), (checkpoint.kind, checkpoint.problem))
        self.assertEqual(0.6, checkpoint.net.beta)
        restored = problem.from_checkpoint(checkpoint, "critic")
        X = np.array([[0.1, 0.2], [-0.5, 0.3]])
        np.testing.assert_array_equal(critic.value(X), restored.value(X))

    def test_wrong_kind_or_dimension(self):
        save_checkpoint(self.path, preset("problem1", 2).init_critic(8, 0.75, 0), "problem1")
        with self.assertRaises(CheckpointError):
            preset("problem1", 2).from_checkpoint(load_checkpoint(self.path), "actor")
        with self.assertRaises(CheckpointError):
            preset("problem1", 3).from_checkpoint(load_checkpoint(self.path), "critic")

    def test_unsupported_version(self):
        save_checkpoint(self.path, small_net(), None)
        with open(self.path, encoding="UTF-8") as file:
            document = json.load(file)
        document["format_version"] = 99
        with open(self.path, "w", encoding="UTF-8") as file:
            json.dump(document, file)
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_unreadable(self):
        with open(self.path, "w", encoding="UTF-8") as file:
            file.write("not json")
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

"""Test the analytic scalar fields."""

import unittest

import numpy as np

from hjb_actor_critic.fields import (
    ConstantField,
    GridField,
    ProductField,
    RadialField,
    ScaledField,
    SeparableProductField,
    SumField,
    as_batch,
)
from hjb_actor_critic.tests.util import central_difference, relative_error


def _fields(d):
    radial = RadialField(lambda r: np.exp(-r), lambda r: -np.exp(-r), lambda r: np.exp(-r), d)
    separable = SeparableProductField(np.sin, np.cos, lambda x: -np.sin(x), d)
    return {
        "radial": radial,
        "separable": separable,
        "sum": SumField([radial, ConstantField(2.0, d)]),
        "product": ProductField(radial, separable),
        "scaled": ScaledField(-3.0, separable),
    }


class TestScalarFields(unittest.TestCase):
    """Derivatives of every field agree with finite differences and with each other."""

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.d = 4
        self.X = self.rng.uniform(-0.8, 0.8, size=(5, self.d))
        self.A = self.rng.standard_normal((5, self.d))

    def test_gradients(self):
        for name, field in _fields(self.d).items():
            with self.subTest(field=name):
                grads = field.grad(self.X)
                for row, x in enumerate(self.X):
                    want = central_difference(lambda z, f=field: f.value(z[None, :])[0], x)
                    self.assertLess(relative_error(grads[row], want), 1e-7)

    def test_hessians(self):
        for name, field in _fields(self.d).items():
            with self.subTest(field=name):
                hessians = field.hess(self.X)
                for row, x in enumerate(self.X):
                    want = central_difference(lambda z, f=field: f.grad(z[None, :])[0], x)
                    self.assertLess(relative_error(hessians[row], want), 1e-6)

    def test_quadratic_form_and_diagonal(self):
        for name, field in _fields(self.d).items():
            with self.subTest(field=name):
                H = field.hess(self.X)
                want = np.einsum("mi,mij,mj->m", self.A, H, self.A)
                self.assertLess(relative_error(field.hess_quad(self.X, self.A), want), 1e-12)
                self.assertLess(relative_error(field.hess_diag(self.X), np.diagonal(H, axis1=1, axis2=2)), 1e-12)

    def test_separable_with_zero_factor(self):
        field = SeparableProductField(lambda x: x, np.ones_like, np.zeros_like, 3)
        X = np.array([[0.0, 2.0, 3.0]])
        self.assertEqual([6.0, 0.0, 0.0], field.grad(X)[0].tolist())

    def test_operators(self):
        radial = _fields(self.d)["radial"]
        combined = 2.0 * radial + ConstantField(1.0, self.d)
        want = 2.0 * radial.value(self.X) + 1.0
        np.testing.assert_allclose(combined.value(self.X), want)
        self.assertIsInstance(radial * radial, ProductField)

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            SumField([ConstantField(1.0, 2), ConstantField(1.0, 3)])


class TestAsBatch(unittest.TestCase):
    """Test as_batch."""

    def test_single_point(self):
        self.assertEqual((1, 3), as_batch([1.0, 2.0, 3.0], 3).shape)

    def test_one_dimensional_points(self):
        self.assertEqual((4, 1), as_batch(np.zeros(4), 1).shape)

    def test_wrong_dimension(self):
        with self.assertRaises(ValueError):
            as_batch(np.zeros((2, 3)), 2)


class TestGridField(unittest.TestCase):
    """Test GridField."""

    def test_only_on_nodes(self):
        nodes = np.linspace(-1, 1, 5).reshape(-1, 1)
        field = GridField(nodes, nodes[:, 0] ** 2, 2 * nodes, np.full((5, 1, 1), 2.0))
        np.testing.assert_array_equal(field.value(nodes), nodes[:, 0] ** 2)
        self.assertEqual([2.0] * 5, field.hess_diag(nodes)[:, 0].tolist())
        with self.assertRaises(ValueError):
            field.value(nodes[:3])

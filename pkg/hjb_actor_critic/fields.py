"""Analytic scalar fields on batches of points.

Every field is evaluated on a batch ``X`` of shape ``(m, d)`` and exposes its value,
gradient, dense Hessian, Hessian quadratic form ``a^T H a`` and Hessian diagonal.
Critics, value functions, auxiliary functions and boundary extensions are all fields,
which lets the generator treat a network and a closed-form solution the same way.
"""

from abc import ABC, abstractmethod
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


def as_batch(X, dim: int) -> Array:
    """Return X as a float array of shape (m, dim); a single point becomes a batch of one."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if dim > 1 or X.size == 1 else X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got array of shape {X.shape}")
    return X


class ScalarField(ABC):
    """A twice differentiable function from R^d to R, evaluated row-wise."""

    def __init__(self, dim: int):
        """Store the input dimension."""
        self.dim = dim

    @abstractmethod
    def value(self, X) -> Array:
        """Values, shape (m,)."""

    @abstractmethod
    def grad(self, X) -> Array:
        """Gradients, shape (m, d)."""

    @abstractmethod
    def hess(self, X) -> Array:
        """Dense Hessians, shape (m, d, d)."""

    def hess_quad(self, X, A) -> Array:
        """Quadratic forms a_j^T H(x_j) a_j for each row, shape (m,)."""
        return np.einsum("mi,mij,mj->m", A, self.hess(X), A)

    def hess_diag(self, X) -> Array:
        """Hessian diagonals, shape (m, d)."""
        return np.diagonal(self.hess(X), axis1=1, axis2=2).copy()

    def __call__(self, X) -> Array:
        """Shortcut for value()."""
        return self.value(X)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        """Pointwise sum."""
        return SumField([self, other])

    def __mul__(self, other) -> "ScalarField":
        """Pointwise product with another field, or scaling by a number."""
        if isinstance(other, ScalarField):
            return ProductField(self, other)
        return ScaledField(float(other), self)

    __rmul__ = __mul__


class ConstantField(ScalarField):
    """f(x) = constant."""

    def __init__(self, constant: float, dim: int):
        """Create a constant field on R^dim."""
        super().__init__(dim)
        self.constant = float(constant)

    def value(self, X):
        X = as_batch(X, self.dim)
        return np.full(X.shape[0], self.constant)

    def grad(self, X):
        return np.zeros_like(as_batch(X, self.dim))

    def hess(self, X):
        X = as_batch(X, self.dim)
        return np.zeros((X.shape[0], self.dim, self.dim))

    def hess_quad(self, X, A):
        return np.zeros(as_batch(X, self.dim).shape[0])

    def hess_diag(self, X):
        return np.zeros_like(as_batch(X, self.dim))


class RadialField(ScalarField):
    """f(x) = F(r) with r = |x|^2, given F, F' and F''."""

    def __init__(self, func: Callable, dfunc: Callable, d2func: Callable, dim: int):
        """Create a radial field from the profile F and its first two derivatives in r."""
        super().__init__(dim)
        self.func = func
        self.dfunc = dfunc
        self.d2func = d2func

    def _radius(self, X):
        X = as_batch(X, self.dim)
        return X, np.einsum("mi,mi->m", X, X)

    def value(self, X):
        _, r = self._radius(X)
        return np.asarray(self.func(r), dtype=float) * np.ones_like(r)

    def grad(self, X):
        X, r = self._radius(X)
        return 2.0 * (self.dfunc(r) * np.ones_like(r))[:, None] * X

    def hess(self, X):
        X, r = self._radius(X)
        d1 = self.dfunc(r) * np.ones_like(r)
        d2 = self.d2func(r) * np.ones_like(r)
        eye = np.eye(self.dim)[None, :, :]
        return 2.0 * d1[:, None, None] * eye + 4.0 * d2[:, None, None] * np.einsum("mi,mj->mij", X, X)

    def hess_quad(self, X, A):
        X, r = self._radius(X)
        d1 = self.dfunc(r) * np.ones_like(r)
        d2 = self.d2func(r) * np.ones_like(r)
        return 2.0 * d1 * np.einsum("mi,mi->m", A, A) + 4.0 * d2 * np.einsum("mi,mi->m", X, A) ** 2

    def hess_diag(self, X):
        X, r = self._radius(X)
        d1 = self.dfunc(r) * np.ones_like(r)
        d2 = self.d2func(r) * np.ones_like(r)
        return 2.0 * d1[:, None] + 4.0 * d2[:, None] * X**2


class SeparableProductField(ScalarField):
    """f(x) = prod_i G(x_i), given G, G' and G''."""

    def __init__(self, func: Callable, dfunc: Callable, d2func: Callable, dim: int):
        """Create a product field from the one-dimensional factor and its derivatives."""
        super().__init__(dim)
        self.func = func
        self.dfunc = dfunc
        self.d2func = d2func

    def _factors(self, X):
        X = as_batch(X, self.dim)
        return X, self.func(X), self.dfunc(X), self.d2func(X)

    @staticmethod
    def _leave_one_out(G):
        # prefix[:, i] = prod_{j<i} G_j and suffix[:, i] = prod_{j>i} G_j, zero safe.
        ones = np.ones((G.shape[0], 1))
        prefix = np.cumprod(np.hstack([ones, G[:, :-1]]), axis=1)
        suffix = np.cumprod(np.hstack([ones, G[:, :0:-1]]), axis=1)[:, ::-1]
        return prefix * suffix

    def value(self, X):
        _, G, _, _ = self._factors(X)
        return np.prod(G, axis=1)

    def grad(self, X):
        _, G, dG, _ = self._factors(X)
        return dG * self._leave_one_out(G)

    def hess(self, X):
        X, G, dG, d2G = self._factors(X)
        m, d = X.shape
        H = np.empty((m, d, d))
        loo = self._leave_one_out(G)
        for i in range(d):
            H[:, i, i] = d2G[:, i] * loo[:, i]
            for j in range(i + 1, d):
                rest = np.prod(np.delete(G, [i, j], axis=1), axis=1)
                H[:, i, j] = H[:, j, i] = dG[:, i] * dG[:, j] * rest
        return H

    def hess_quad(self, X, A):
        # Second order Taylor coefficients of t -> prod_i G(x_i + t a_i).
        _, G, dG, d2G = self._factors(X)
        c0 = np.ones(G.shape[0])
        c1 = np.zeros(G.shape[0])
        c2 = np.zeros(G.shape[0])
        for i in range(self.dim):
            p0 = G[:, i]
            p1 = dG[:, i] * A[:, i]
            p2 = 0.5 * d2G[:, i] * A[:, i] ** 2
            c0, c1, c2 = c0 * p0, c0 * p1 + c1 * p0, c0 * p2 + c1 * p1 + c2 * p0
        return 2.0 * c2

    def hess_diag(self, X):
        _, G, _, d2G = self._factors(X)
        return d2G * self._leave_one_out(G)


class SumField(ScalarField):
    """Sum of fields."""

    def __init__(self, terms: Sequence[ScalarField]):
        """Create the sum of the given fields, which must share a dimension."""
        dims = {term.dim for term in terms}
        if len(dims) != 1:
            raise ValueError(f"cannot add fields of dimensions {sorted(dims)}")
        super().__init__(dims.pop())
        self.terms = list(terms)

    def value(self, X):
        return sum(term.value(X) for term in self.terms)

    def grad(self, X):
        return sum(term.grad(X) for term in self.terms)

    def hess(self, X):
        return sum(term.hess(X) for term in self.terms)

    def hess_quad(self, X, A):
        return sum(term.hess_quad(X, A) for term in self.terms)

    def hess_diag(self, X):
        return sum(term.hess_diag(X) for term in self.terms)


class ProductField(ScalarField):
    """Pointwise product f * g."""

    def __init__(self, left: ScalarField, right: ScalarField):
        """Create the product of two fields of the same dimension."""
        if left.dim != right.dim:
            raise ValueError(f"cannot multiply fields of dimensions {left.dim} and {right.dim}")
        super().__init__(left.dim)
        self.left = left
        self.right = right

    def value(self, X):
        return self.left.value(X) * self.right.value(X)

    def grad(self, X):
        return self.left.value(X)[:, None] * self.right.grad(X) + self.right.value(X)[:, None] * self.left.grad(X)

    def hess(self, X):
        f, g = self.left.value(X), self.right.value(X)
        df, dg = self.left.grad(X), self.right.grad(X)
        cross = np.einsum("mi,mj->mij", df, dg)
        return (
            f[:, None, None] * self.right.hess(X)
            + g[:, None, None] * self.left.hess(X)
            + cross
            + np.transpose(cross, (0, 2, 1))
        )

    def hess_quad(self, X, A):
        f, g = self.left.value(X), self.right.value(X)
        fa = np.einsum("mi,mi->m", self.left.grad(X), A)
        ga = np.einsum("mi,mi->m", self.right.grad(X), A)
        return f * self.right.hess_quad(X, A) + g * self.left.hess_quad(X, A) + 2.0 * fa * ga

    def hess_diag(self, X):
        f, g = self.left.value(X), self.right.value(X)
        return (
            f[:, None] * self.right.hess_diag(X)
            + g[:, None] * self.left.hess_diag(X)
            + 2.0 * self.left.grad(X) * self.right.grad(X)
        )


class ScaledField(ScalarField):
    """c * f for a constant c."""

    def __init__(self, scale: float, field: ScalarField):
        """Scale a field by a constant."""
        super().__init__(field.dim)
        self.scale = scale
        self.field = field

    def value(self, X):
        return self.scale * self.field.value(X)

    def grad(self, X):
        return self.scale * self.field.grad(X)

    def hess(self, X):
        return self.scale * self.field.hess(X)

    def hess_quad(self, X, A):
        return self.scale * self.field.hess_quad(X, A)

    def hess_diag(self, X):
        return self.scale * self.field.hess_diag(X)


class GridField(ScalarField):
    """Values and derivatives tabulated on a fixed set of nodes.

    Only evaluable on the nodes it was built from; used by the grid integration of
    the wide-network limit, where derivatives come from finite differences.
    """

    def __init__(self, nodes: Array, values: Array, grads: Array, hessians: Array):
        """Store tabulated values (m,), gradients (m, d) and Hessians (m, d, d)."""
        super().__init__(nodes.shape[1])
        self.nodes = nodes
        self.values = values
        self.grads = grads
        self.hessians = hessians

    def _check(self, X):
        X = as_batch(X, self.dim)
        if X.shape != self.nodes.shape:
            raise ValueError("GridField can only be evaluated on its own nodes")
        return X

    def value(self, X):
        self._check(X)
        return self.values

    def grad(self, X):
        self._check(X)
        return self.grads

    def hess(self, X):
        self._check(X)
        return self.hessians

"""State space domains: auxiliary boundary functions, samplers and exit geometry."""

from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from hjb_actor_critic.choices import DomainKindChoices
from hjb_actor_critic.errors import ConfigurationError
from hjb_actor_critic.fields import RadialField, ScalarField, SeparableProductField, as_batch

INTERIOR_SHRINK = 1.0 - 64.0 * np.finfo(float).eps


class EtaEval(NamedTuple):
    """Value and derivatives of the auxiliary function at a batch of points."""

    value: np.ndarray
    grad: np.ndarray
    hess_diag: np.ndarray
    hess: np.ndarray


@dataclass(frozen=True)
class DomainSpec:
    """A ball B(0, R) or a box [-R, R]^d."""

    kind: DomainKindChoices
    radius: float
    dim: int

    def __post_init__(self):
        """Validate the shape parameters."""
        object.__setattr__(self, "kind", DomainKindChoices(self.kind))
        if not self.radius > 0:
            raise ConfigurationError(f"domain radius must be positive, got {self.radius}", field="radius")
        if self.dim < 1:
            raise ConfigurationError(f"domain dimension must be at least 1, got {self.dim}", field="dim")

    def __str__(self):
        """Short human readable description."""
        if self.kind == DomainKindChoices.BALL:
            return f"B(0, {self.radius:g}) in R^{self.dim}"
        return f"[-{self.radius:g}, {self.radius:g}]^{self.dim}"

    @property
    def eta(self) -> ScalarField:
        """The auxiliary function: R^2 - |x|^2 on balls, prod_i (R^2 - x_i^2) on boxes."""
        r2 = self.radius**2
        if self.kind == DomainKindChoices.BALL:
            return RadialField(lambda r: r2 - r, lambda r: -1.0, lambda r: 0.0, self.dim)
        return SeparableProductField(lambda x: r2 - x**2, lambda x: -2.0 * x, lambda x: np.full_like(x, -2.0), self.dim)

    def contains(self, X) -> np.ndarray:
        """Boolean mask of the rows that lie strictly inside the domain."""
        X = as_batch(X, self.dim)
        if self.kind == DomainKindChoices.BALL:
            return np.einsum("mi,mi->m", X, X) < self.radius**2
        return np.all(np.abs(X) < self.radius, axis=1)

    def exit_crossing(self, inside, outside) -> Tuple[np.ndarray, np.ndarray]:
        """Locate where the segments inside -> outside leave the domain.

        The crossing is the linear interpolation between the last interior and the first
        exterior state, snapped onto the boundary.

        Returns:
            tuple: fractions theta in [0, 1] of each segment and the exit points on the boundary.
        """
        start = as_batch(inside, self.dim)
        step = as_batch(outside, self.dim) - start
        R = self.radius
        if self.kind == DomainKindChoices.BALL:
            qa = np.einsum("mi,mi->m", step, step)
            qb = 2.0 * np.einsum("mi,mi->m", start, step)
            qc = np.einsum("mi,mi->m", start, start) - R**2
            disc = np.sqrt(np.maximum(qb**2 - 4.0 * qa * qc, 0.0))
            # Stable root of qa t^2 + qb t + qc = 0 with qc <= 0.
            with np.errstate(divide="ignore", invalid="ignore"):
                theta = np.where(qb >= 0, -2.0 * qc / (qb + disc), (disc - qb) / (2.0 * qa))
            theta = np.clip(np.nan_to_num(theta, nan=1.0), 0.0, 1.0)
            point = start + theta[:, None] * step
            norms = np.linalg.norm(point, axis=1)
            safe = norms > 0
            point[safe] *= (R / norms[safe])[:, None]
            return theta, point
        with np.errstate(divide="ignore", invalid="ignore"):
            target = np.sign(step) * R
            fractions = np.where(step != 0, (target - start) / step, np.inf)
        fractions = np.where(fractions < 0, np.inf, fractions)
        axis = np.argmin(fractions, axis=1)
        rows = np.arange(start.shape[0])
        theta = np.clip(fractions[rows, axis], 0.0, 1.0)
        point = np.clip(start + theta[:, None] * step, -R, R)
        point[rows, axis] = np.sign(step[rows, axis]) * R
        return theta, point

    def grid(self, points_per_axis: int) -> np.ndarray:
        """Tensor grid including the boundary; supports d = 1 and boxes with d = 2."""
        axis = np.linspace(-self.radius, self.radius, points_per_axis)
        if self.dim == 1:
            return axis.reshape(-1, 1)
        if self.dim == 2 and self.kind == DomainKindChoices.BOX:
            first, second = np.meshgrid(axis, axis, indexing="ij")
            return np.column_stack([first.ravel(), second.ravel()])
        raise ConfigurationError(f"grids are only available on intervals and two dimensional boxes, not {self}")


def eta_eval(dom: DomainSpec, x) -> EtaEval:
    """Analytic value, gradient, Hessian diagonal and full Hessian of the auxiliary function."""
    eta = dom.eta
    X = as_batch(x, dom.dim)
    return EtaEval(eta.value(X), eta.grad(X), eta.hess_diag(X), eta.hess(X))


def sample_interior(dom: DomainSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw m points uniformly from the open domain."""
    if m < 1:
        raise ConfigurationError(f"sample count must be at least 1, got {m}")
    if dom.kind == DomainKindChoices.BALL:
        direction = rng.standard_normal((m, dom.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        # u^(1/d) rounds to 1 for u close to 1; keep a few ulps away from the sphere.
        radius = dom.radius * np.minimum(rng.random(m) ** (1.0 / dom.dim), INTERIOR_SHRINK)
        return direction * radius[:, None]
    low = np.nextafter(-dom.radius, 0.0)
    high = np.nextafter(dom.radius, 0.0)
    return np.clip(rng.uniform(low, dom.radius, size=(m, dom.dim)), low, high)


def sample_boundary(dom: DomainSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw m points uniformly from the boundary of the domain.

    Sphere points are normalized Gaussians. On a box every face has the same area, so
    the face is picked uniformly and the free coordinates are uniform on [-R, R].
    """
    if m < 1:
        raise ConfigurationError(f"sample count must be at least 1, got {m}")
    if dom.kind == DomainKindChoices.BALL:
        direction = rng.standard_normal((m, dom.dim))
        return dom.radius * direction / np.linalg.norm(direction, axis=1, keepdims=True)
    points = rng.uniform(-dom.radius, dom.radius, size=(m, dom.dim))
    axis = rng.integers(0, dom.dim, size=m)
    sign = rng.choice([-1.0, 1.0], size=m)
    points[np.arange(m), axis] = sign * dom.radius
    return points

"""Stochastic control problems: the LQR benchmark, constructed problems and the preset catalog.

A constructed problem starts from a chosen value function V, optimal control u*, drift b,
diffusion Phi and a penalty zeta >= 0 vanishing only at u*, and defines the running cost

    c(x, a) = zeta(x, a) + gamma V(x) - b(x, a) . grad V(x) - 1/2 Tr(Phi Phi^T(x, a) Hess V(x))

so that (V, u*) solves the resulting HJB equation exactly.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from hjb_actor_critic.choices import DomainKindChoices
from hjb_actor_critic.domains import DomainSpec, sample_boundary
from hjb_actor_critic.errors import (
    CheckpointError,
    ConfigurationError,
    MissingAnalyticSolutionError,
    UnknownProblemError,
)
from hjb_actor_critic.fields import ConstantField, ProductField, RadialField, ScalarField, SeparableProductField
from hjb_actor_critic.nn import ActorPolicy, Checkpoint, CriticNet, InitSpec, ShallowNet, init_net
from hjb_actor_critic.pde_ops import generator, second_order_terms

logger = logging.getLogger(__name__)

Coefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]

ACTION_BOUND_P3 = 1000.0


@dataclass(frozen=True)
class ProblemSpec:
    """A stationary stochastic control problem on a bounded domain.

    Coefficients take a batch of states X (m, d) and actions A (m, k). ``diffusion``
    returns Phi with shape (m, d, d'), or its diagonal (m, d) when ``diffusion_diagonal``
    is set. ``gbar`` extends the boundary data g to the whole domain.
    """

    name: str
    domain: DomainSpec
    action_dim: int
    noise_dim: int
    gamma: float
    drift: Coefficient
    diffusion: Coefficient
    running_cost: Coefficient
    gbar: ScalarField
    diffusion_diagonal: bool = False
    action_clamp: Optional[Tuple[np.ndarray, np.ndarray]] = None
    value_function: Optional[ScalarField] = None
    optimal_control: Optional[Callable[[np.ndarray], np.ndarray]] = None
    zeta: Optional[Coefficient] = None
    du_hamiltonian: Optional[Callable] = field(default=None, repr=False)
    description: str = ""

    def __post_init__(self):
        """Validate dimensions and the discount rate."""
        if self.action_dim < 1 or self.noise_dim < 1:
            raise ConfigurationError(f"problem {self.name}: action and noise dimensions must be positive")
        if self.gamma < 0:
            raise ConfigurationError(f"problem {self.name}: gamma must not be negative", field="gamma")
        if self.diffusion_diagonal and self.noise_dim != self.domain.dim:
            raise ConfigurationError(f"problem {self.name}: a diagonal diffusion needs d' = d")
        if self.gbar.dim != self.domain.dim:
            raise ConfigurationError(f"problem {self.name}: gbar dimension does not match the domain")

    @property
    def dim(self) -> int:
        """State dimension d."""
        return self.domain.dim

    @property
    def eta(self) -> ScalarField:
        """The domain's auxiliary function."""
        return self.domain.eta

    @property
    def has_analytic(self) -> bool:
        """Whether the closed-form (V, u*) pair is known."""
        return self.value_function is not None and self.optimal_control is not None

    def boundary(self, X) -> np.ndarray:
        """Boundary data g at boundary points (gbar restricted to the boundary)."""
        return self.gbar.value(X)

    def require_analytic(self, metric: str = "metric"):
        """Raise MissingAnalyticSolutionError unless (V, u*) is known."""
        if not self.has_analytic:
            raise MissingAnalyticSolutionError(self.name, metric)

    def hamiltonian_gap(self, X, A) -> np.ndarray:
        """H(a, V)(x) - gamma V(x); equals zeta for constructed problems."""
        self.require_analytic("hamiltonian gap")
        return generator(self, self.value_function, X, A, with_du=False).value

    def make_actor(self, net: ShallowNet) -> ActorPolicy:
        """Wrap a network as this problem's actor (with its action clamp)."""
        if (net.input_dim, net.output_dim) != (self.dim, self.action_dim):
            raise ConfigurationError(
                f"actor network maps R^{net.input_dim} -> R^{net.output_dim}, "
                f"problem {self.name} needs R^{self.dim} -> R^{self.action_dim}"
            )
        return ActorPolicy(net, self.action_clamp)

    def make_critic(self, net: ShallowNet) -> CriticNet:
        """Wrap a network as this problem's critic Z * eta + gbar."""
        if (net.input_dim, net.output_dim) != (self.dim, 1):
            raise ConfigurationError(
                f"critic network maps R^{net.input_dim} -> R^{net.output_dim}, "
                f"problem {self.name} needs R^{self.dim} -> R"
            )
        return CriticNet(net, self.eta, self.gbar)

    def init_actor(self, width: int, beta: float, seed: int) -> ActorPolicy:
        """Freshly initialized actor."""
        return self.make_actor(init_net(width, self.dim, self.action_dim, beta, InitSpec(seed)))

    def init_critic(self, width: int, beta: float, seed: int) -> CriticNet:
        """Freshly initialized critic."""
        return self.make_critic(init_net(width, self.dim, 1, beta, InitSpec(seed)))

    def from_checkpoint(self, checkpoint: Checkpoint, kind: str):
        """Rebuild an actor or critic from a checkpoint, checking it fits this problem.

        Raises:
            CheckpointError: on a kind or dimension mismatch.
        """
        if checkpoint.kind != kind:
            raise CheckpointError(f"expected a {kind} checkpoint, got a {checkpoint.kind} checkpoint")
        if checkpoint.problem not in (None, self.name):
            logger.warning("Checkpoint was trained on %s, loading it for %s", checkpoint.problem, self.name)
        try:
            return self.make_actor(checkpoint.net) if kind == "actor" else self.make_critic(checkpoint.net)
        except ConfigurationError as ex:
            raise CheckpointError(str(ex)) from ex


@dataclass(frozen=True)
class ConstructedSpec:
    """Ingredients of a problem reverse engineered from a known solution."""

    name: str
    domain: DomainSpec
    action_dim: int
    noise_dim: int
    gamma: float
    value_function: ScalarField
    optimal_control: Callable[[np.ndarray], np.ndarray]
    drift: Coefficient
    diffusion: Coefficient
    zeta: Coefficient
    diffusion_diagonal: bool = False
    action_clamp: Optional[Tuple[np.ndarray, np.ndarray]] = None
    boundary_value: Optional[float] = None
    description: str = ""


def _boundary_extension(spec: ConstructedSpec) -> ScalarField:
    if spec.boundary_value is not None:
        return ConstantField(spec.boundary_value, spec.domain.dim)
    samples = spec.value_function.value(sample_boundary(spec.domain, 256, np.random.default_rng(0)))
    if np.ptp(samples) < 1e-12:
        return ConstantField(float(np.mean(samples)), spec.domain.dim)
    # V itself is a smooth extension of its boundary values.
    return spec.value_function


def make_constructed(spec: ConstructedSpec) -> ProblemSpec:
    """Assemble the running cost that makes (V, u*) the solution and return the full problem."""
    V = spec.value_function

    def running_cost(X, A):
        second = second_order_terms(V, X, spec.drift(X, A), spec.diffusion(X, A), spec.diffusion_diagonal)
        return spec.zeta(X, A) + spec.gamma * V.value(X) - second

    return ProblemSpec(
        name=spec.name,
        domain=spec.domain,
        action_dim=spec.action_dim,
        noise_dim=spec.noise_dim,
        gamma=spec.gamma,
        drift=spec.drift,
        diffusion=spec.diffusion,
        running_cost=running_cost,
        gbar=_boundary_extension(spec),
        diffusion_diagonal=spec.diffusion_diagonal,
        action_clamp=spec.action_clamp,
        value_function=V,
        optimal_control=spec.optimal_control,
        zeta=spec.zeta,
        description=spec.description,
    )


def lqr_gain(p: float, q: float, xi: float, gamma: float) -> float:
    """Coefficient k of the LQR value function V(x) = k |x|^2."""
    return (np.sqrt(q**2 * gamma**2 + 4.0 * p * q * xi**2) - gamma * q) / (2.0 * xi**2)


def make_lqr(
    d: int = 10,
    p: float = 1.0,
    q: float = 1.0,
    xi: float = 1.0,
    gamma: float = 1.0,
    R: float = 1.0,
    eps: float = -1.0,
) -> ProblemSpec:
    """Linear-quadratic regulator variant with state and control dependent diagonal noise.

    Drift xi * a, diffusion diag(sqrt(2) (1 + eps x_i a_i)), cost q |a|^2 + f(x), on the
    ball B(0, R). The solution is V(x) = k |x|^2 with the optimal control
    u*_i(x) = -k (xi + 2 eps) x_i / (q + 2 k eps^2 x_i^2).

    The published LQR runs train with identity truncation and the 1 / (1 + n) schedule.
    TrainConfig defaults use smooth truncation and a constant rate instead, and the LQR
    reproduction test trains with those defaults unchanged.
    """
    for name, value in (("p", p), ("q", q), ("xi", xi), ("gamma", gamma), ("R", R)):
        if not value > 0:
            raise ConfigurationError(f"LQR parameter {name} must be positive, got {value}", field=name)
    k = lqr_gain(p, q, xi, gamma)
    domain = DomainSpec(DomainKindChoices.BALL, R, d)

    def curvature(X):
        return q + 2.0 * k * eps**2 * X**2

    def optimal_control(X):
        return -k * (xi + 2.0 * eps) * X / curvature(X)

    def state_cost(X):
        r = np.einsum("mi,mi->m", X, X)
        return gamma * k * r + np.sum(k**2 * (xi + 2.0 * eps) ** 2 * X**2 / curvature(X), axis=1) - 2.0 * k * d

    def du_hamiltonian(X, A, grad, hess_diag):
        return xi * grad + 2.0 * eps * X * (1.0 + eps * X * A) * hess_diag + 2.0 * q * A

    return ProblemSpec(
        name="lqr",
        domain=domain,
        action_dim=d,
        noise_dim=d,
        gamma=gamma,
        drift=lambda X, A: xi * A,
        diffusion=lambda X, A: np.sqrt(2.0) * (1.0 + eps * X * A),
        running_cost=lambda X, A: q * np.einsum("mi,mi->m", A, A) + state_cost(X),
        gbar=ConstantField(k * R**2, d),
        diffusion_diagonal=True,
        value_function=RadialField(lambda r: k * r, lambda r: k, lambda r: 0.0, d),
        optimal_control=optimal_control,
        zeta=lambda X, A: np.sum(curvature(X) * (A - optimal_control(X)) ** 2, axis=1),
        du_hamiltonian=du_hamiltonian,
        description=f"LQR on B(0,{R:g}) with state and control dependent noise, k={k:.6f}",
    )


def _logcosh(z):
    z = np.abs(z)
    return z + np.log1p(np.exp(-2.0 * z)) - np.log(2.0)


def _ones_diagonal(X, A):
    return np.ones_like(X)


def _problem1(d: int = 10) -> ProblemSpec:
    return make_constructed(
        ConstructedSpec(
            name="problem1",
            domain=DomainSpec(DomainKindChoices.BALL, 1.0, d),
            action_dim=d,
            noise_dim=d,
            gamma=1.0,
            value_function=RadialField(lambda r: np.exp(-r), lambda r: -np.exp(-r), lambda r: np.exp(-r), d),
            optimal_control=lambda X: X.copy(),
            drift=lambda X, A: A * X,
            diffusion=_ones_diagonal,
            zeta=lambda X, A: np.sum(np.abs(X - A), axis=1) + np.sum((X - A) ** 2, axis=1),
            diffusion_diagonal=True,
            boundary_value=np.exp(-1.0),
            description="easy test case: V = exp(-|x|^2), u* = x",
        )
    )


def _problem2(name: str, control_noise: bool, zeta_scale: float) -> ProblemSpec:
    d = 10

    def diffusion(X, A):
        column = 1.0 + X**2
        if control_noise:
            column = column + A**2
        return column[:, :, None]

    def optimal_control(X):
        return logsumexp(X, axis=1)[:, None]

    if control_noise:
        description = "non-convex Hamiltonian: control enters the noise"
    else:
        description = "convex Hamiltonian: control-free noise"
    if zeta_scale != 1.0:
        description += f", zeta scaled by {zeta_scale:g}"
    return make_constructed(
        ConstructedSpec(
            name=name,
            domain=DomainSpec(DomainKindChoices.BALL, 1.0, d),
            action_dim=1,
            noise_dim=1,
            gamma=1.0,
            value_function=RadialField(np.sin, np.cos, lambda r: -np.sin(r), d),
            optimal_control=optimal_control,
            drift=lambda X, A: A * np.sin(X),
            diffusion=diffusion,
            zeta=lambda X, A: zeta_scale * _logcosh(A[:, 0] - optimal_control(X)[:, 0]),
            boundary_value=np.sin(1.0),
            description=description,
        )
    )


def _problem3() -> ProblemSpec:
    d = 10

    def optimal_control(X):
        return np.column_stack([np.tanh(X[:, 0]), np.sinh(X[:, 1]), np.cosh(X[:, 2])])

    def drift(X, A):
        return X * np.sum(np.exp(A), axis=1)[:, None] + np.exp(-X)

    def zeta(X, A):
        gap = A - optimal_control(X)
        return gap[:, 0] ** 2 + gap[:, 1] ** 4 + gap[:, 2] ** 6

    bound = np.full(3, ACTION_BOUND_P3)
    return make_constructed(
        ConstructedSpec(
            name="problem3",
            domain=DomainSpec(DomainKindChoices.BALL, 1.0, d),
            action_dim=3,
            noise_dim=d,
            gamma=1.0,
            value_function=RadialField(lambda r: 2.0 * r**2 - r, lambda r: 4.0 * r - 1.0, lambda r: 4.0, d),
            optimal_control=optimal_control,
            drift=drift,
            diffusion=_ones_diagonal,
            zeta=zeta,
            diffusion_diagonal=True,
            action_clamp=(-bound, bound),
            boundary_value=1.0,
            description="drift exponentially sensitive to the control, actions clamped to [-1000, 1000]^3",
        )
    )


def _problem4() -> ProblemSpec:
    d = 10
    bump = SeparableProductField(
        lambda x: np.cos(0.5 * np.pi * x**2) ** 2,
        lambda x: -np.pi * x * np.sin(np.pi * x**2),
        lambda x: -np.pi * np.sin(np.pi * x**2) - 2.0 * np.pi**2 * x**2 * np.cos(np.pi * x**2),
        d,
    )

    def optimal_control(X):
        return X * (1.0 + np.prod(X, axis=1))[:, None]

    return make_constructed(
        ConstructedSpec(
            name="problem4",
            domain=DomainSpec(DomainKindChoices.BOX, 1.0, d),
            action_dim=d,
            noise_dim=d,
            gamma=1.0,
            value_function=ConstantField(1.0, d) + bump,
            optimal_control=optimal_control,
            drift=lambda X, A: A * X + np.einsum("mi,mi->m", X, X)[:, None],
            diffusion=lambda X, A: np.ones_like(X) * (1.0 + np.einsum("mi,mi->m", A, A) / 10.0)[:, None],
            zeta=lambda X, A: np.sum((A - optimal_control(X)) ** 2, axis=1),
            diffusion_diagonal=True,
            boundary_value=1.0,
            description="box domain, control dependent noise scale",
        )
    )


def _problem5() -> ProblemSpec:
    d = 10
    waves = SeparableProductField(
        lambda x: np.sin(np.pi * x),
        lambda x: np.pi * np.cos(np.pi * x),
        lambda x: -(np.pi**2) * np.sin(np.pi * x),
        d,
    )
    radius = RadialField(lambda r: r, lambda r: 1.0, lambda r: 0.0, d)

    def optimal_control(X):
        return (X[:, 0] * np.sin(np.pi * X[:, 2]) + X[:, 1])[:, None]

    return make_constructed(
        ConstructedSpec(
            name="problem5",
            domain=DomainSpec(DomainKindChoices.BOX, 1.0, d),
            action_dim=1,
            noise_dim=d,
            gamma=1.0,
            value_function=ConstantField(1.0, d) + ProductField(radius, waves),
            optimal_control=optimal_control,
            drift=lambda X, A: X * A,
            diffusion=_ones_diagonal,
            zeta=lambda X, A: (A[:, 0] - optimal_control(X)[:, 0]) ** 2,
            diffusion_diagonal=True,
            boundary_value=1.0,
            description="box domain, scalar control",
        )
    )


def _toy1d() -> ProblemSpec:
    return make_constructed(
        ConstructedSpec(
            name="toy1d",
            domain=DomainSpec(DomainKindChoices.BALL, 1.0, 1),
            action_dim=1,
            noise_dim=1,
            gamma=1.0,
            value_function=RadialField(lambda r: np.exp(-r), lambda r: -np.exp(-r), lambda r: np.exp(-r), 1),
            optimal_control=lambda X: X.copy(),
            drift=lambda X, A: A * X,
            diffusion=_ones_diagonal,
            zeta=lambda X, A: (A[:, 0] - X[:, 0]) ** 2,
            diffusion_diagonal=True,
            boundary_value=np.exp(-1.0),
            description="one dimensional problem with convex Hamiltonian, for limit studies",
        )
    )


def _poisson1d() -> ProblemSpec:
    return ProblemSpec(
        name="poisson1d",
        domain=DomainSpec(DomainKindChoices.BALL, 1.0, 1),
        action_dim=1,
        noise_dim=1,
        gamma=0.0,
        drift=lambda X, A: np.zeros_like(X),
        diffusion=lambda X, A: np.full_like(X, np.sqrt(2.0)),
        running_cost=lambda X, A: np.ones(X.shape[0]),
        gbar=ConstantField(0.0, 1),
        diffusion_diagonal=True,
        value_function=RadialField(lambda r: 0.5 * (1.0 - r), lambda r: -0.5, lambda r: 0.0, 1),
        optimal_control=lambda X: np.zeros((X.shape[0], 1)),
        description="V'' = -1 on (-1, 1) with zero boundary data, control has no effect",
    )


@dataclass(frozen=True)
class _Preset:
    builder: Callable[..., ProblemSpec]
    description: str
    adjustable_dim: bool = False


PRESETS: Dict[str, _Preset] = {
    "lqr": _Preset(make_lqr, "LQR with state and control dependent noise (default d=10)", True),
    "problem1": _Preset(_problem1, "ball, V = exp(-|x|^2), u* = x (default d=10)", True),
    "problem2a_zeta": _Preset(
        lambda: _problem2("problem2a_zeta", True, 1.0), "non-convex Hamiltonian, zeta = logcosh(a - u*)"
    ),
    "problem2a_zeta_star": _Preset(
        lambda: _problem2("problem2a_zeta_star", True, 100.0), "non-convex Hamiltonian, zeta = 100 logcosh(a - u*)"
    ),
    "problem2b": _Preset(lambda: _problem2("problem2b", False, 1.0), "convex Hamiltonian, noise free of control"),
    "problem3": _Preset(_problem3, "drift exponentially sensitive to the control, clamped actions"),
    "problem4": _Preset(_problem4, "box [-1,1]^10, V = 1 + prod cos^2(pi x_i^2 / 2)"),
    "problem5": _Preset(_problem5, "box [-1,1]^10, scalar control"),
    "toy1d": _Preset(_toy1d, "1-d convex problem for limit dynamics studies"),
    "poisson1d": _Preset(_poisson1d, "1-d Poisson equation with closed-form value (1 - x^2) / 2"),
}


def catalog() -> Dict[str, str]:
    """Preset names with one line descriptions."""
    return {name: entry.description for name, entry in PRESETS.items()}


def preset(name: str, d: Optional[int] = None) -> ProblemSpec:
    """Build a preset problem by name.

    Args:
        name: one of the names in catalog().
        d: state dimension, only for presets whose dimension can vary (lqr, problem1).

    Raises:
        UnknownProblemError: when the name is not in the catalog.
        ConfigurationError: when a dimension is given for a fixed-dimension preset.
    """
    try:
        entry = PRESETS[name]
    except KeyError as ex:
        raise UnknownProblemError(name, PRESETS) from ex
    if d is None:
        problem = entry.builder()
    elif entry.adjustable_dim:
        problem = entry.builder(d)
    else:
        fixed = entry.builder()
        if d != fixed.dim:
            raise ConfigurationError(f"problem {name} has fixed dimension {fixed.dim}, got {d}", field="dim")
        problem = fixed
    logger.debug("Built problem %s on %s", name, problem.domain)
    return problem

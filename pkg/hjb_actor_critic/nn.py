"""Shallow networks with 1/N^beta output scaling and fully analytic derivatives.

A ``ShallowNet`` computes ``N^-beta * outer @ tanh(inner @ x + bias)``. Input derivatives
up to second order and parameter gradients are assembled in closed form, so the
training loop never needs an autodiff framework.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Tuple, Union

import numpy as np

from hjb_actor_critic.choices import ActivationChoices
from hjb_actor_critic.config import check_beta
from hjb_actor_critic.errors import CheckpointError, ConfigurationError
from hjb_actor_critic.fields import ProductField, ScalarField, SumField, as_batch

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


def _tanh_derivatives(pre):
    act = np.tanh(pre)
    d1 = 1.0 - act**2
    d2 = -2.0 * act * d1
    return act, d1, d2


@dataclass(frozen=True)
class InitSpec:
    """Initialization law of the network parameters.

    Outer weights and biases are uniform on [-1, 1], inner weights standard normal.
    These satisfy the moment conditions of the wide-network theory.
    """

    seed: int = 0
    outer_dist: str = "uniform_pm1"
    inner_dist: str = "std_normal"
    bias_dist: str = "uniform_pm1"

    def __post_init__(self):
        """Only the documented laws are supported."""
        for name, allowed in (
            ("outer_dist", "uniform_pm1"),
            ("inner_dist", "std_normal"),
            ("bias_dist", "uniform_pm1"),
        ):
            if getattr(self, name) != allowed:
                raise ConfigurationError(f"unsupported distribution {getattr(self, name)!r}", field=name)


@dataclass(eq=False)
class NetParams:
    """Parameter-shaped arrays: the weights of a net, a gradient, or an update."""

    outer: np.ndarray
    inner: np.ndarray
    bias: np.ndarray

    def __add__(self, other: "NetParams") -> "NetParams":
        """Elementwise sum."""
        return NetParams(self.outer + other.outer, self.inner + other.inner, self.bias + other.bias)

    def __sub__(self, other: "NetParams") -> "NetParams":
        """Elementwise difference."""
        return NetParams(self.outer - other.outer, self.inner - other.inner, self.bias - other.bias)

    def __mul__(self, scale) -> "NetParams":
        """Multiply every array by a scalar."""
        return NetParams(self.outer * scale, self.inner * scale, self.bias * scale)

    __rmul__ = __mul__

    def __neg__(self) -> "NetParams":
        """Negate every array."""
        return self * -1.0

    def copy(self) -> "NetParams":
        """Deep copy."""
        return NetParams(self.outer.copy(), self.inner.copy(), self.bias.copy())

    def zeros_like(self) -> "NetParams":
        """All-zero arrays of the same shapes."""
        return NetParams(np.zeros_like(self.outer), np.zeros_like(self.inner), np.zeros_like(self.bias))

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The arrays in the fixed order outer, inner, bias."""
        return self.outer, self.inner, self.bias

    def max_abs(self) -> float:
        """Largest absolute entry over all arrays."""
        return max(float(np.max(np.abs(array))) if array.size else 0.0 for array in self.arrays())

    def max_abs_by_class(self) -> dict:
        """Largest absolute entry of each parameter class."""
        return {
            name: float(np.max(np.abs(array))) if array.size else 0.0
            for name, array in zip(("outer", "inner", "bias"), self.arrays())
        }

    def is_finite(self) -> bool:
        """True when no entry is NaN or infinite."""
        return all(np.isfinite(array).all() for array in self.arrays())

    def to_vector(self) -> np.ndarray:
        """Concatenate everything into one flat vector."""
        return np.concatenate([array.ravel() for array in self.arrays()])

    def from_vector(self, vector: np.ndarray) -> "NetParams":
        """Inverse of to_vector, using this object's shapes."""
        pieces = []
        offset = 0
        for array in self.arrays():
            pieces.append(np.asarray(vector[offset : offset + array.size], dtype=float).reshape(array.shape))
            offset += array.size
        return NetParams(*pieces)


@dataclass(eq=False)
class ShallowNet:
    """One hidden layer network ``U(x) = N^-beta * outer @ tanh(inner @ x + bias)``.

    Parameters are only changed through ``apply_update``; every evaluation method is
    pure and safe to call from several threads.
    """

    outer: np.ndarray
    inner: np.ndarray
    bias: np.ndarray
    beta: float
    activation: ActivationChoices = ActivationChoices.TANH
    seed: Optional[int] = None
    scale: float = field(init=False, repr=False)

    def __post_init__(self):
        """Check shapes and finiteness, and cache the output scaling."""
        self.outer = np.atleast_2d(np.asarray(self.outer, dtype=float))
        self.inner = np.atleast_2d(np.asarray(self.inner, dtype=float))
        self.bias = np.asarray(self.bias, dtype=float).ravel()
        self.activation = ActivationChoices(self.activation)
        check_beta(self.beta)
        width = self.inner.shape[0]
        if self.outer.shape[1] != width or self.bias.shape[0] != width:
            raise ConfigurationError(
                f"inconsistent parameter shapes outer={self.outer.shape} "
                f"inner={self.inner.shape} bias={self.bias.shape}"
            )
        if not self.params.is_finite():
            raise ConfigurationError("network parameters must be finite")
        self.scale = float(width) ** (-self.beta)

    @property
    def width(self) -> int:
        """Number of hidden units N."""
        return self.inner.shape[0]

    @property
    def input_dim(self) -> int:
        """Input dimension d."""
        return self.inner.shape[1]

    @property
    def output_dim(self) -> int:
        """Output dimension k."""
        return self.outer.shape[0]

    @property
    def params(self) -> NetParams:
        """A copy of the parameters."""
        return NetParams(self.outer.copy(), self.inner.copy(), self.bias.copy())

    def with_params(self, params: NetParams) -> "ShallowNet":
        """A new network with the same hyperparameters and the given parameters."""
        return ShallowNet(params.outer, params.inner, params.bias, self.beta, self.activation, self.seed)

    def copy(self) -> "ShallowNet":
        """Independent copy."""
        return self.with_params(self.params)

    def apply_update(self, params: NetParams):
        """Replace the parameters in place (single writer)."""
        self.outer = np.array(params.outer, dtype=float)
        self.inner = np.array(params.inner, dtype=float)
        self.bias = np.array(params.bias, dtype=float)

    def preactivation(self, X) -> np.ndarray:
        """inner @ x + bias for each row, shape (m, N)."""
        return as_batch(X, self.input_dim) @ self.inner.T + self.bias

    def forward(self, X) -> np.ndarray:
        """Outputs for a batch, shape (m, k)."""
        return self.scale * np.tanh(self.preactivation(X)) @ self.outer.T

    def hidden_features(self, X) -> np.ndarray:
        """Scaled hidden activations N^-beta * tanh(pre), shape (m, N)."""
        return self.scale * np.tanh(self.preactivation(X))

    def param_gradient_accumulate(self, X, weights) -> NetParams:
        """Sum over rows of <weights_j, d U(x_j) / d params>.

        Args:
            X: points, shape (m, d).
            weights: per point output weights, shape (m, k).

        Returns:
            NetParams: the accumulated gradient, reduced in row order.
        """
        X = as_batch(X, self.input_dim)
        weights = np.asarray(weights, dtype=float).reshape(X.shape[0], self.output_dim)
        act, d1, _ = _tanh_derivatives(self.preactivation(X))
        d_outer = self.scale * weights.T @ act
        hidden = (weights @ self.outer) * d1 * self.scale
        return NetParams(d_outer, hidden.T @ X, hidden.sum(axis=0))


class NetField(ScalarField):
    """A single-output ShallowNet viewed as a scalar field."""

    def __init__(self, net: ShallowNet):
        """Wrap a network with output dimension 1."""
        if net.output_dim != 1:
            raise ConfigurationError(f"a scalar field needs a network with one output, got {net.output_dim}")
        super().__init__(net.input_dim)
        self.net = net

    def _coefficients(self, X):
        net = self.net
        act, d1, d2 = _tanh_derivatives(net.preactivation(X))
        return act, d1, d2, net.scale * net.outer[0]

    def value(self, X):
        return self.net.forward(X)[:, 0]

    def grad(self, X):
        _, d1, _, c = self._coefficients(X)
        return (d1 * c) @ self.net.inner

    def hess(self, X):
        _, _, d2, c = self._coefficients(X)
        W = self.net.inner
        return np.einsum("mn,ni,nj->mij", d2 * c, W, W)

    def hess_quad(self, X, A):
        _, _, d2, c = self._coefficients(X)
        projected = A @ self.net.inner.T
        return np.einsum("mn,mn->m", d2 * c, projected**2)

    def hess_diag(self, X):
        _, _, d2, c = self._coefficients(X)
        return (d2 * c) @ self.net.inner**2


class CriticNet(ScalarField):
    """Critic Q(x) = Z(x) * eta(x) + gbar(x), exact on the boundary where eta vanishes."""

    def __init__(self, z_net: ShallowNet, eta: ScalarField, gbar: ScalarField):
        """Combine the inner network with the problem's auxiliary function and boundary extension."""
        super().__init__(z_net.input_dim)
        if eta.dim != self.dim or gbar.dim != self.dim:
            raise ConfigurationError("critic network, eta and gbar must share the input dimension")
        self.z_net = z_net
        self.eta = eta
        self.gbar = gbar
        self._field = SumField([ProductField(NetField(z_net), eta), gbar])

    def value(self, X):
        X = as_batch(X, self.dim)
        return self.z_net.forward(X)[:, 0] * self.eta.value(X) + self.gbar.value(X)

    def grad(self, X):
        return self._field.grad(X)

    def hess(self, X):
        return self._field.hess(X)

    def hess_quad(self, X, A):
        return self._field.hess_quad(X, A)

    def hess_diag(self, X):
        return self._field.hess_diag(X)

    def copy(self) -> "CriticNet":
        """Copy with independent network parameters."""
        return CriticNet(self.z_net.copy(), self.eta, self.gbar)

    def param_gradient_accumulate(self, X, weights) -> NetParams:
        """Sum over rows of weights_j * d(-Q(x_j)) / d params = -weights_j * eta(x_j) * dZ(x_j) / d params."""
        X = as_batch(X, self.dim)
        scaled = -np.asarray(weights, dtype=float).ravel() * self.eta.value(X)
        return self.z_net.param_gradient_accumulate(X, scaled[:, None])


class ActorPolicy:
    """Actor network with the problem's optional elementwise action clamp."""

    def __init__(self, net: ShallowNet, clamp: Optional[Tuple[np.ndarray, np.ndarray]] = None):
        """Pair a network with optional (lower, upper) bounds on each action coordinate."""
        self.net = net
        if clamp is not None:
            lower, upper = (np.broadcast_to(np.asarray(bound, dtype=float), (net.output_dim,)) for bound in clamp)
            clamp = (lower, upper)
        self.clamp = clamp

    @property
    def input_dim(self) -> int:
        """State dimension."""
        return self.net.input_dim

    @property
    def action_dim(self) -> int:
        """Action dimension."""
        return self.net.output_dim

    def __call__(self, X) -> np.ndarray:
        """Clamped actions, shape (m, k)."""
        raw = self.net.forward(X)
        if self.clamp is None:
            return raw
        return np.clip(raw, self.clamp[0], self.clamp[1])

    def clamp_mask(self, X) -> np.ndarray:
        """Derivative of the clamp: 1 where the raw output is inside the bounds, 0 outside."""
        raw = self.net.forward(X)
        if self.clamp is None:
            return np.ones_like(raw)
        return ((raw >= self.clamp[0]) & (raw <= self.clamp[1])).astype(float)

    def copy(self) -> "ActorPolicy":
        """Copy with independent network parameters."""
        return ActorPolicy(self.net.copy(), self.clamp)

    def param_gradient_accumulate(self, X, weights) -> NetParams:
        """Accumulated parameter gradient of the clamped output against per-point weights (m, k)."""
        weights = np.asarray(weights, dtype=float).reshape(-1, self.action_dim)
        if self.clamp is not None:
            weights = weights * self.clamp_mask(X)
        return self.net.param_gradient_accumulate(X, weights)


class CriticDerivatives(NamedTuple):
    """Critic value, gradient and the directional second derivative operator at one point."""

    value: float
    grad: np.ndarray
    dir2: Callable[..., float]


def init_net(N: int, d: int, k: int, beta: float = 0.75, spec: Optional[InitSpec] = None) -> ShallowNet:
    """Draw a network from the initialization law; reproducible given the seed."""
    spec = spec or InitSpec()
    for name, value in (("width", N), ("input_dim", d), ("output_dim", k)):
        if int(value) != value or value < 1:
            raise ConfigurationError(f"{name} must be a positive integer, got {value}", field=name)
    check_beta(beta)
    rng = np.random.default_rng(spec.seed)
    outer = rng.uniform(-1.0, 1.0, size=(k, N))
    inner = rng.standard_normal((N, d))
    bias = rng.uniform(-1.0, 1.0, size=N)
    return ShallowNet(outer, inner, bias, beta, ActivationChoices.TANH, spec.seed)


def actor_forward(net: Union[ShallowNet, ActorPolicy], x) -> np.ndarray:
    """Actor output for a point (shape (k,)) or a batch (shape (m, k))."""
    single = np.ndim(x) == 1 and (net.input_dim > 1 or np.size(x) == 1)
    out = net(x) if isinstance(net, ActorPolicy) else net.forward(x)
    return out[0] if single else out


def critic_forward(critic: CriticNet, x) -> Union[float, np.ndarray]:
    """Critic value Z * eta + gbar for a point or a batch."""
    values = critic.value(x)
    single = np.ndim(x) == 1 and (critic.dim > 1 or np.size(x) == 1)
    return float(values[0]) if single else values


def critic_derivatives(critic: ScalarField, x) -> CriticDerivatives:
    """Value, gradient and ``dir2(a, s) = a^T Hess Q a + 2 s . grad Q`` at a single point."""
    X = as_batch(x, critic.dim)[:1]
    value = float(critic.value(X)[0])
    grad = critic.grad(X)[0]

    def dir2(a, s) -> float:
        a = np.asarray(a, dtype=float).reshape(1, -1)
        s = np.asarray(s, dtype=float).ravel()
        return float(critic.hess_quad(X, a)[0] + 2.0 * s @ grad)

    return CriticDerivatives(value, grad, dir2)


def actor_param_gradient_accumulate(net: Union[ShallowNet, ActorPolicy], X, weights) -> NetParams:
    """Sum_j <weights_j, grad_theta U(x_j)>."""
    return net.param_gradient_accumulate(X, weights)


def critic_param_gradient_accumulate(critic: CriticNet, X, weights) -> NetParams:
    """Sum_j weights_j * grad_phi(-Q(x_j))."""
    return critic.param_gradient_accumulate(X, weights)


def fit_to_targets(net: ShallowNet, X, Y, row_scale=None, ridge: float = 1e-10) -> ShallowNet:
    """Least-squares refit of the outer layer with the hidden layer frozen.

    Solves ``min |diag(row_scale) F c - Y|^2 + ridge |c|^2`` where F are the scaled
    hidden features; ``row_scale`` lets a critic fit ``eta * Z = V - gbar``.

    Returns:
        ShallowNet: a new network with the fitted outer weights.
    """
    X = as_batch(X, net.input_dim)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], -1)
    features = net.hidden_features(X)
    if row_scale is not None:
        features = features * np.asarray(row_scale, dtype=float).reshape(-1, 1)
    gram = features.T @ features + ridge * np.eye(net.width)
    outer = np.linalg.solve(gram, features.T @ Y).T
    params = net.params
    params.outer = outer
    logger.debug("Refitted outer layer of width %s on %s points", net.width, X.shape[0])
    return net.with_params(params)


def save_checkpoint(path, model: Union[ShallowNet, ActorPolicy, CriticNet], problem: Optional[str] = None):
    """Write a network to a versioned JSON checkpoint."""
    if isinstance(model, CriticNet):
        kind, net = "critic", model.z_net
    elif isinstance(model, ActorPolicy):
        kind, net = "actor", model.net
    else:
        kind, net = "actor", model
    document = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "problem": problem,
        "beta": net.beta,
        "N": net.width,
        "d": net.input_dim,
        "k": net.output_dim,
        "activation": str(net.activation),
        "seed": net.seed,
        "outer": net.outer.tolist(),
        "inner": net.inner.tolist(),
        "bias": net.bias.tolist(),
    }
    Path(path).write_text(json.dumps(document), encoding="UTF-8")
    logger.debug("Wrote %s checkpoint %s", kind, path)


class Checkpoint(NamedTuple):
    """Contents of a checkpoint file."""

    kind: str
    net: ShallowNet
    problem: Optional[str]


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: when the file is unreadable, of an unknown version, or inconsistent.
    """
    try:
        document = json.loads(Path(path).read_text(encoding="UTF-8"))
    except (OSError, ValueError) as ex:
        raise CheckpointError(f"cannot read checkpoint {path}: {ex}") from ex
    version = document.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version!r} in {path}")
    try:
        net = ShallowNet(
            np.asarray(document["outer"], dtype=float),
            np.asarray(document["inner"], dtype=float),
            np.asarray(document["bias"], dtype=float),
            float(document["beta"]),
            document.get("activation", "tanh"),
            document.get("seed"),
        )
    except (KeyError, ValueError) as ex:
        raise CheckpointError(f"malformed checkpoint {path}: {ex}") from ex
    if (net.width, net.input_dim, net.output_dim) != (document["N"], document["d"], document["k"]):
        raise CheckpointError(f"checkpoint {path} declares shapes that do not match its arrays")
    return Checkpoint(document.get("kind", "actor"), net, document.get("problem"))

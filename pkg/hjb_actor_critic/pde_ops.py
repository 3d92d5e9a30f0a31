"""Generator evaluation, Hamiltonian action derivatives and the clipped gradient estimators.

The second order part of the generator, ``b . grad Q + 1/2 Tr(Phi Phi^T Hess Q)``, is
evaluated column by column as ``sum_j dir2(phi_j / sqrt(2), b / (2 d'))`` so that the
full Hessian of the critic is never formed.
"""

import logging
from typing import TYPE_CHECKING, Dict, NamedTuple, Optional

import numpy as np

from hjb_actor_critic.errors import NumericError
from hjb_actor_critic.fields import ScalarField, as_batch
from hjb_actor_critic.nn import ActorPolicy, CriticNet, NetParams
from hjb_actor_critic.truncation import TruncationFamily
from hjb_actor_critic.util import chunk_slices, first_nonfinite_row, ordered_map

if TYPE_CHECKING:
    from hjb_actor_critic.problems import ProblemSpec

logger = logging.getLogger(__name__)

ACTION_FD_STEP = 1e-5
SQRT2 = np.sqrt(2.0)


class GeneratorEval(NamedTuple):
    """Generator value L^a Q, Hamiltonian H = L^a Q + gamma Q and dH/da, per row."""

    value: np.ndarray
    hamiltonian: np.ndarray
    du_hamiltonian: Optional[np.ndarray]


class StepResult(NamedTuple):
    """Raw gradient estimate of one update, the batch loss, and diagnostics."""

    delta: NetParams
    loss: float
    diagnostics: Dict[str, float]


class _FieldTerms:
    """Lazily cached derivatives of a field on one batch."""

    def __init__(self, field: ScalarField, X: np.ndarray):
        self.field = field
        self.X = X
        self._value = None
        self._grad = None
        self._hess_diag = None

    @property
    def value(self):
        if self._value is None:
            self._value = self.field.value(self.X)
        return self._value

    @property
    def grad(self):
        if self._grad is None:
            self._grad = self.field.grad(self.X)
        return self._grad

    @property
    def hess_diag(self):
        if self._hess_diag is None:
            self._hess_diag = self.field.hess_diag(self.X)
        return self._hess_diag


def second_order_terms(field: ScalarField, X, drift, diffusion, diagonal: bool = False, terms=None) -> np.ndarray:
    """``b . grad f + 1/2 Tr(Phi Phi^T Hess f)`` per row via directional second derivatives.

    Args:
        field: the function f.
        X: points, shape (m, d).
        drift: b at the points, shape (m, d).
        diffusion: Phi, shape (m, d, d') or its diagonal (m, d) when ``diagonal`` is set.
        diagonal: whether ``diffusion`` holds only the diagonal of a square Phi.
        terms: optional cache of the field's derivatives on X.
    """
    terms = terms or _FieldTerms(field, X)
    if diagonal:
        # Columns s_i e_i: the Hessian quadratic forms are s_i^2 H_ii.
        return np.einsum("mi,mi->m", drift, terms.grad) + 0.5 * np.einsum("mi,mi->m", diffusion**2, terms.hess_diag)
    noise_dim = diffusion.shape[2]
    shifted = np.einsum("mi,mi->m", drift, terms.grad) / noise_dim
    total = np.zeros(X.shape[0])
    for column in range(noise_dim):
        total += field.hess_quad(X, diffusion[:, :, column] / SQRT2) + shifted
    return total


def dense_second_order_terms(field: ScalarField, X, drift, diffusion, diagonal: bool = False) -> np.ndarray:
    """Same quantity as second_order_terms, contracting the full Hessian entry by entry."""
    if diagonal:
        covariance = np.einsum("mi,ij->mij", diffusion**2, np.eye(diffusion.shape[1]))
    else:
        covariance = np.einsum("mik,mjk->mij", diffusion, diffusion)
    return np.einsum("mi,mi->m", drift, field.grad(X)) + 0.5 * np.einsum("mij,mij->m", covariance, field.hess(X))


def check_finite(name: str, values: np.ndarray, X: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Return values unchanged, or raise NumericError naming the first non-finite row."""
    row = first_nonfinite_row(values)
    if row >= 0:
        raise NumericError(f"non-finite {name} evaluation", coefficient=name, point=X[row], action=A[row])
    return values


def _controlled_terms(problem: "ProblemSpec", field: ScalarField, X, A, terms: _FieldTerms) -> np.ndarray:
    """The action dependent part of the Hamiltonian: second order terms plus running cost."""
    drift = check_finite("drift", problem.drift(X, A), X, A)
    diffusion = check_finite("diffusion", problem.diffusion(X, A), X, A)
    cost = check_finite("running_cost", problem.running_cost(X, A), X, A)
    return second_order_terms(field, X, drift, diffusion, problem.diffusion_diagonal, terms) + cost


def du_hamiltonian(problem: "ProblemSpec", field: ScalarField, X, A, terms=None, step: float = ACTION_FD_STEP):
    """dH/da per row, with the critic held fixed.

    Uses the problem's analytic override when it has one, otherwise central finite
    differences in each action coordinate.
    """
    X = as_batch(X, problem.dim)
    A = as_batch(A, problem.action_dim)
    terms = terms or _FieldTerms(field, X)
    if problem.du_hamiltonian is not None:
        return problem.du_hamiltonian(X, A, terms.grad, terms.hess_diag)
    out = np.empty_like(A)
    for index in range(problem.action_dim):
        plus = A.copy()
        minus = A.copy()
        plus[:, index] += step
        minus[:, index] -= step
        out[:, index] = (
            _controlled_terms(problem, field, X, plus, terms) - _controlled_terms(problem, field, X, minus, terms)
        ) / (2.0 * step)
    return out


def generator(problem: "ProblemSpec", critic: ScalarField, x, a, with_du: bool = True) -> GeneratorEval:
    """Evaluate L^a Q, H(a, Q) and dH/da at a batch of (state, action) pairs.

    ``critic`` may be a CriticNet or any analytic ScalarField, such as the problem's
    value function.

    Raises:
        NumericError: when a coefficient is not finite, naming the first bad point.
    """
    X = as_batch(x, problem.dim)
    A = as_batch(a, problem.action_dim)
    terms = _FieldTerms(critic, X)
    hamiltonian = _controlled_terms(problem, critic, X, A, terms)
    value = hamiltonian - problem.gamma * terms.value
    du = du_hamiltonian(problem, critic, X, A, terms) if with_du else None
    return GeneratorEval(value, hamiltonian, du)


def _weights(batch: np.ndarray, weights) -> np.ndarray:
    if weights is None:
        return np.full(batch.shape[0], 1.0 / batch.shape[0])
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.shape[0] != batch.shape[0]:
        raise ValueError(f"got {weights.shape[0]} weights for {batch.shape[0]} points")
    return weights


def _reduce(parts) -> NetParams:
    # Fixed chunk order keeps the sum bit-reproducible for any thread count.
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    return total


def critic_gradient_step(
    problem: "ProblemSpec",
    critic: CriticNet,
    actor: ActorPolicy,
    fam: TruncationFamily,
    batch,
    weights=None,
    threads: int = 1,
) -> StepResult:
    """Clipped Q-PDE gradient ``sum_j w_j F(L^U Q(x_j)) grad_phi(-Q(x_j))``.

    Weights default to 1/m, i.e. the sampling measure normalized to probability.
    The loss is the weighted mean of (L^U Q)^2.
    """
    X = as_batch(batch, problem.dim)
    w = _weights(X, weights)

    def work(chunk):
        Xc = X[chunk]
        residual = generator(problem, critic, Xc, actor(Xc), with_du=False).value
        clipped = fam(residual)
        delta = critic.param_gradient_accumulate(Xc, w[chunk] * clipped.F)
        return delta, float(w[chunk] @ residual**2), float(np.max(np.abs(residual)))

    parts = ordered_map(work, chunk_slices(X.shape[0]), threads)
    delta = _reduce([part[0] for part in parts])
    loss = float(sum(part[1] for part in parts))
    diagnostics = {"max_abs_residual": max(part[2] for part in parts)}
    logger.debug("critic step: loss=%.6g max|L|=%.6g", loss, diagnostics["max_abs_residual"])
    return StepResult(delta, loss, diagnostics)


def actor_gradient_step(
    problem: "ProblemSpec",
    critic: CriticNet,
    actor: ActorPolicy,
    fam: TruncationFamily,
    batch,
    loss_floor: Optional[float] = None,
    weights=None,
    threads: int = 1,
) -> StepResult:
    """Clipped actor gradient ``sum_j w_j psi(dH/da(x_j)) grad_theta U(x_j)``.

    With a loss floor, the actor minimizes ``max(H - gamma Q, floor)`` and points at or
    below the floor contribute nothing. The loss is the weighted mean of H, or of the
    floored quantity when a floor is set.
    """
    X = as_batch(batch, problem.dim)
    w = _weights(X, weights)

    def work(chunk):
        Xc = X[chunk]
        evaluation = generator(problem, critic, Xc, actor(Xc), with_du=True)
        clipped = fam(evaluation.du_hamiltonian).psi
        if loss_floor is None:
            loss = float(w[chunk] @ evaluation.hamiltonian)
            active = 1.0
        else:
            loss = float(w[chunk] @ np.maximum(evaluation.value, loss_floor))
            active = float(np.mean(evaluation.value > loss_floor))
            clipped = clipped * (evaluation.value > loss_floor)[:, None]
        delta = actor.param_gradient_accumulate(Xc, w[chunk][:, None] * clipped)
        return delta, loss, active * (chunk.stop - chunk.start)

    parts = ordered_map(work, chunk_slices(X.shape[0]), threads)
    delta = _reduce([part[0] for part in parts])
    loss = float(sum(part[1] for part in parts))
    diagnostics = {"active_fraction": sum(part[2] for part in parts) / X.shape[0]}
    logger.debug("actor step: loss=%.6g active=%.3f", loss, diagnostics["active_fraction"])
    return StepResult(delta, loss, diagnostics)

"""Checks of the wide-network limit: kernels, empirical NTKs, parameter drift and the limit ODE.

The limit dynamics on a grid are

    dQ/dt = omega * B (w * L^U Q),    dU/dt = -alpha * A (w * dH/da),    (Q_0, U_0) = (gbar, 0),

where A is the neural tangent kernel of the initialization law, B(x, y) = eta(x) eta(y) A(x, y)
and w are quadrature weights of the sampling measure.
"""

import hashlib
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from hjb_actor_critic.choices import OptimizerChoices, TruncationModeChoices
from hjb_actor_critic.config import LimitOdeConfig, TrainConfig, check_beta
from hjb_actor_critic.domains import sample_interior
from hjb_actor_critic.errors import ConfigurationError, StepSizeError
from hjb_actor_critic.fields import GridField, ScalarField, as_batch
from hjb_actor_critic.nn import ActorPolicy, CriticNet, InitSpec, ShallowNet, init_net
from hjb_actor_critic.pde_ops import actor_gradient_step, critic_gradient_step, generator
from hjb_actor_critic.problems import ProblemSpec
from hjb_actor_critic.trainer import train
from hjb_actor_critic.truncation import TruncationFamily
from hjb_actor_critic.util import derived_seed, log_log_slope

logger = logging.getLogger(__name__)

KERNEL_CHUNK = 2048


class KernelEstimate(NamedTuple):
    """Monte Carlo estimate of a kernel value."""

    x: np.ndarray
    y: np.ndarray
    mean: float
    std_error: float
    samples: int


def _kernel_draws(dim: int, samples: int, rng: np.random.Generator):
    c = rng.uniform(-1.0, 1.0, size=samples)
    w = rng.standard_normal((samples, dim))
    b = rng.uniform(-1.0, 1.0, size=samples)
    return c, w, b


def kernel_integrand(x, y, c, w, b) -> np.ndarray:
    """sigma(w.x+b) sigma(w.y+b) + c^2 sigma'(w.x+b) sigma'(w.y+b) (x.y + 1) per draw."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    sx = np.tanh(w @ x + b)
    sy = np.tanh(w @ y + b)
    return sx * sy + c**2 * (1.0 - sx**2) * (1.0 - sy**2) * (x @ y + 1.0)


def kernel_A(x, y, init: Optional[InitSpec] = None, M: int = 100000, rng=None) -> KernelEstimate:
    """Monte Carlo estimate of the limiting kernel A(x, y) under the initialization law."""
    if M < 1:
        raise ConfigurationError(f"sample count must be positive, got {M}")
    init = init or InitSpec()
    rng = rng if rng is not None else np.random.default_rng(init.seed)
    x = np.asarray(x, dtype=float).ravel()
    values = kernel_integrand(x, y, *_kernel_draws(x.size, M, rng))
    std_error = float(np.std(values, ddof=1) / math.sqrt(M)) if M > 1 else math.nan
    return KernelEstimate(x, np.asarray(y, dtype=float).ravel(), float(np.mean(values)), std_error, M)


def kernel_B(x, y, eta: ScalarField, init: Optional[InitSpec] = None, M: int = 100000, rng=None) -> KernelEstimate:
    """B(x, y) = eta(x) eta(y) A(x, y); exactly zero when either point is on the boundary."""
    base = kernel_A(x, y, init, M, rng)
    scale = float(eta.value(as_batch(x, eta.dim))[0] * eta.value(as_batch(y, eta.dim))[0])
    return base._replace(mean=scale * base.mean, std_error=abs(scale) * base.std_error)


def empirical_ntk(net: ShallowNet, x, y) -> float:
    """Finite-width kernel (1/N) sum_i [sigma_i(x) sigma_i(y) + c_i^2 sigma'_i(x) sigma'_i(y) (x.y + 1)]."""
    if net.output_dim != 1:
        raise ConfigurationError("the empirical NTK is defined for single output networks")
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    return float(np.mean(kernel_integrand(x, y, net.outer[0], net.inner, net.bias)))


def kernel_matrix(
    points,
    init: Optional[InitSpec] = None,
    M: int = 20000,
    cache_dir: Optional[str] = None,
    cache_key: str = "",
) -> np.ndarray:
    """Kernel A on all pairs of points with shared samples, optionally cached on disk as .npz."""
    init = init or InitSpec()
    points = np.asarray(points, dtype=float)
    cache_file = None
    if cache_dir:
        digest = hashlib.sha256()
        digest.update(cache_key.encode())
        digest.update(points.tobytes())
        digest.update(f"{init.seed}:{M}".encode())
        cache_file = Path(cache_dir) / f"kernel-{digest.hexdigest()[:16]}.npz"
        if cache_file.exists():
            logger.debug("Loading kernel matrix from %s", cache_file)
            with np.load(cache_file) as cached:
                return cached["kernel"]
    rng = np.random.default_rng(init.seed)
    c, w, b = _kernel_draws(points.shape[1], M, rng)
    gram = points @ points.T + 1.0
    kernel = np.zeros((points.shape[0], points.shape[0]))
    for start in range(0, M, KERNEL_CHUNK):
        part = slice(start, start + KERNEL_CHUNK)
        act = np.tanh(points @ w[part].T + b[part])
        slope = c[part] * (1.0 - act**2)
        kernel += act @ act.T + (slope @ slope.T) * gram
    kernel /= M
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        np.savez(cache_file, kernel=kernel)
    return kernel


class NtkVarianceStudy(NamedTuple):
    """Mean and variance of the empirical NTK over re-initializations, per width."""

    rows: List[tuple]
    slope: float


def ntk_variance_study(x, y, widths: Sequence[int], reinits: int = 200, beta: float = 0.75, seed: int = 0):
    """Variance of the empirical NTK at (x, y) across re-initializations; it should decay like 1/N."""
    x = np.asarray(x, dtype=float).ravel()
    rows = []
    for width in widths:
        values = [
            empirical_ntk(init_net(width, x.size, 1, beta, InitSpec(derived_seed(seed, width, index))), x, y)
            for index in range(reinits)
        ]
        rows.append((int(width), float(np.mean(values)), float(np.var(values, ddof=1))))
        logger.info("width %s: NTK mean %.6g variance %.6g", width, rows[-1][1], rows[-1][2])
    slope = log_log_slope([row[0] for row in rows], [row[2] for row in rows])
    return NtkVarianceStudy(rows, slope)


class DriftRow(NamedTuple):
    """Largest parameter movement of one network since the first snapshot."""

    cycle: int
    network: str
    outer: float
    inner: float
    bias: float


def parameter_drift_report(snapshots: Sequence[tuple]) -> List[DriftRow]:
    """Per class max |param_t - param_0| for each snapshot (cycle, actor, critic), relative to the first."""
    if not snapshots:
        return []
    _, actor0, critic0 = snapshots[0]
    rows = []
    for cycle, actor, critic in snapshots:
        for name, net, start in (("actor", actor.net, actor0.net), ("critic", critic.z_net, critic0.z_net)):
            drift = (net.params - start.params).max_abs_by_class()
            rows.append(DriftRow(cycle, name, drift["outer"], drift["inner"], drift["bias"]))
    return rows


class DriftStudy(NamedTuple):
    """Final drift per (width, seed), the fitted slope of mean drift against width, and per-cycle history.

    History rows are (width, seed, DriftRow).
    """

    rows: List[tuple]
    slope: float
    bound: float
    history: List[tuple]


def analyzed_regime(cfg: TrainConfig) -> TrainConfig:
    """The training regime of the limit theory: SGD with the N^(2 beta - 1) rate factor."""
    return cfg.replace(optimizer=OptimizerChoices.SGD, include_ntk_rate_factor=True)


def parameter_drift_study(
    problem: ProblemSpec, widths: Sequence[int], seeds: Sequence[int], cfg: TrainConfig
) -> DriftStudy:
    """Train at each width and seed in the analyzed regime and fit how the parameter drift scales with N.

    The fitted slope should not exceed delta + beta - 1 (the returned ``bound``) by much.
    """
    rows = []
    history = []
    for width in widths:
        for seed in seeds:
            run_cfg = analyzed_regime(cfg).replace(width=width, critic_width=width, seed=seed)
            snapshots = []
            train(
                problem,
                run_cfg,
                probes=range(run_cfg.total_cycles + 1),
                on_probe=lambda cycle, actor, critic, store=snapshots: store.append((cycle, actor, critic)),
            )
            report = parameter_drift_report(snapshots)
            history.extend((int(width), int(seed), row) for row in report)
            final = [row for row in report if row.cycle == run_cfg.total_cycles]
            drift = max(max(row.outer, row.inner, row.bias) for row in final) if final else 0.0
            rows.append((int(width), int(seed), float(drift)))
            logger.info("width %s seed %s: max drift %.6g", width, seed, drift)
    means = [np.mean([row[2] for row in rows if row[0] == width]) for width in widths]
    positive = all(mean > 0 for mean in means)
    slope = log_log_slope(widths, means) if positive else math.nan
    delta = cfg.truncation_delta if cfg.truncation_delta is not None else (1.0 - cfg.beta) / 5.0
    return DriftStudy(rows, slope, delta + cfg.beta - 1.0, history)


def quadrature_weights(problem: ProblemSpec, points_per_axis: int) -> np.ndarray:
    """Trapezoidal weights on the problem's grid, normalized to sum to one."""
    axis = np.ones(points_per_axis)
    axis[0] = axis[-1] = 0.5
    weights = axis if problem.dim == 1 else np.outer(axis, axis).ravel()
    return weights / weights.sum()


def grid_derivatives(values: np.ndarray, problem: ProblemSpec, points_per_axis: int):
    """Finite difference gradients and Hessians of grid values.

    Central differences inside, second order one-sided stencils at the ends.
    """
    spacing = 2.0 * problem.domain.radius / (points_per_axis - 1)
    dim = problem.dim
    shaped = values.reshape((points_per_axis,) * dim)
    grads = [np.gradient(shaped, spacing, axis=axis, edge_order=2) for axis in range(dim)]
    hessians = np.empty((values.size, dim, dim))
    for i in range(dim):
        hessians[:, i, i] = _second_difference(shaped, spacing, i).ravel()
        for j in range(i + 1, dim):
            mixed = np.gradient(grads[i], spacing, axis=j, edge_order=2).ravel()
            hessians[:, i, j] = hessians[:, j, i] = mixed
    return np.column_stack([grad.ravel() for grad in grads]), hessians


def _second_difference(values: np.ndarray, spacing: float, axis: int) -> np.ndarray:
    moved = np.moveaxis(values, axis, 0)
    out = np.empty_like(moved)
    out[1:-1] = (moved[2:] - 2.0 * moved[1:-1] + moved[:-2]) / spacing**2
    if moved.shape[0] >= 4:
        out[0] = (2.0 * moved[0] - 5.0 * moved[1] + 4.0 * moved[2] - moved[3]) / spacing**2
        out[-1] = (2.0 * moved[-1] - 5.0 * moved[-2] + 4.0 * moved[-3] - moved[-4]) / spacing**2
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return np.moveaxis(out, 0, axis)


class LimitOdeState(NamedTuple):
    """Grid values of the limit critic and actor at time t."""

    t: float
    Q: np.ndarray
    U: np.ndarray


class LimitOdeResult(NamedTuple):
    """Trajectory of the limit dynamics with final residuals and distances to the analytic solution."""

    grid: np.ndarray
    weights: np.ndarray
    states: List[LimitOdeState]
    residual_critic: float
    residual_actor: float
    l2_critic: float
    l2_actor: float


def _l2(weights, difference) -> float:
    difference = difference.reshape(difference.shape[0], -1)
    return float(math.sqrt(weights @ np.sum(difference**2, axis=1)))


def _clamped(problem: ProblemSpec, U: np.ndarray) -> np.ndarray:
    if problem.action_clamp is None:
        return U
    return np.clip(U, problem.action_clamp[0], problem.action_clamp[1])


class LimitOde:
    """Explicit Euler integration of the limit dynamics on a grid (d = 1, or d = 2 on boxes)."""

    def __init__(self, problem: ProblemSpec, cfg: LimitOdeConfig):
        """Build the grid, quadrature weights and kernel matrices."""
        self.problem = problem
        self.cfg = cfg
        self.grid = problem.domain.grid(cfg.grid_points)
        self.weights = quadrature_weights(problem, cfg.grid_points)
        self.kernel_a = kernel_matrix(
            self.grid, InitSpec(cfg.seed), cfg.kernel_samples, cfg.cache_dir, f"{problem.name}:{cfg.grid_points}"
        )
        eta = problem.eta.value(self.grid)
        self.kernel_b = eta[:, None] * eta[None, :] * self.kernel_a

    def field(self, Q: np.ndarray) -> GridField:
        """Grid field carrying Q with finite difference derivatives."""
        grads, hessians = grid_derivatives(Q, self.problem, self.cfg.grid_points)
        return GridField(self.grid, Q, grads, hessians)

    def velocities(self, Q: np.ndarray, U: np.ndarray):
        """Right-hand sides of the critic and actor equations."""
        evaluation = generator(self.problem, self.field(Q), self.grid, _clamped(self.problem, U))
        dQ = self.cfg.omega * self.kernel_b @ (self.weights * evaluation.value)
        dU = -self.cfg.alpha * self.kernel_a @ (self.weights[:, None] * evaluation.du_hamiltonian)
        return dQ, dU

    def initial_state(self) -> LimitOdeState:
        """(Q_0, U_0) = (gbar, 0) on the grid."""
        U = np.zeros((self.grid.shape[0], self.problem.action_dim))
        return LimitOdeState(0.0, self.problem.gbar.value(self.grid), U)

    def integrate(self, observer: Optional[Callable[[LimitOdeState], None]] = None) -> LimitOdeResult:
        """Integrate to the horizon, recording states every ``record_every`` time units.

        Raises:
            StepSizeError: when the values become non-finite or exceed the explosion threshold.
        """
        cfg = self.cfg
        state = self.initial_state()
        Q, U = state.Q.copy(), state.U.copy()
        states = [state]
        if observer is not None:
            observer(state)
        steps = int(round(cfg.horizon / cfg.dt))
        record_stride = max(1, int(round(cfg.record_every / cfg.dt)))
        for n in range(1, steps + 1):
            dQ, dU = self.velocities(Q, U)
            Q = Q + cfg.dt * dQ
            U = U + cfg.dt * dU
            if not (np.isfinite(Q).all() and np.isfinite(U).all()) or max(
                np.max(np.abs(Q)), np.max(np.abs(U))
            ) > cfg.explosion_threshold:
                row = int(np.argmax(~np.isfinite(Q) | (np.abs(Q) > cfg.explosion_threshold)))
                raise StepSizeError(
                    f"limit dynamics exploded at t={n * cfg.dt:g}; reduce dt (currently {cfg.dt:g})",
                    point=self.grid[row],
                )
            if n % record_stride == 0 or n == steps:
                state = LimitOdeState(n * cfg.dt, Q.copy(), U.copy())
                states.append(state)
                if observer is not None:
                    observer(state)
        dQ, dU = self.velocities(Q, U)
        residual_critic = _l2(self.weights, dQ)
        residual_actor = _l2(self.weights, dU)
        l2_critic = l2_actor = math.nan
        if self.problem.has_analytic:
            l2_critic = _l2(self.weights, Q - self.problem.value_function.value(self.grid))
            l2_actor = _l2(self.weights, _clamped(self.problem, U) - self.problem.optimal_control(self.grid))
        logger.info(
            "limit dynamics at t=%g: residuals %.3g / %.3g, L2 distance to V %.3g",
            states[-1].t,
            residual_critic,
            residual_actor,
            l2_critic,
        )
        return LimitOdeResult(self.grid, self.weights, states, residual_critic, residual_actor, l2_critic, l2_actor)


def limit_ode_integrate(problem: ProblemSpec, cfg: LimitOdeConfig, observer=None) -> LimitOdeResult:
    """Integrate the limit dynamics of the problem; see LimitOde."""
    if problem.dim > 2:
        raise ConfigurationError(
            f"limit dynamics are integrated for d <= 2 only, problem {problem.name} has d={problem.dim}"
        )
    return LimitOde(problem, cfg).integrate(observer)


class WidthConsistencyStudy(NamedTuple):
    """Distances between finite networks and the limit trajectory.

    Rows are (width, seed, t, l2_critic, h2_proxy_critic, l2_actor).
    """

    rows: List[tuple]
    inversions: int


def _network_distances(ode: LimitOde, actor: ActorPolicy, critic: CriticNet, state: LimitOdeState):
    grid, weights = ode.grid, ode.weights
    Q_net = critic.value(grid)
    gap = Q_net - state.Q
    grads, hessians = grid_derivatives(gap, ode.problem, ode.cfg.grid_points)
    l2 = _l2(weights, gap)
    # Discrete H2 proxy: value, gradient and Hessian differences in L2(mu).
    h2 = math.sqrt(l2**2 + _l2(weights, grads) ** 2 + _l2(weights, hessians) ** 2)
    return l2, h2, _l2(weights, actor.net.forward(grid) - state.U)


def width_consistency_study(
    problem: ProblemSpec,
    widths: Sequence[int],
    seeds: Sequence[int],
    cfg: LimitOdeConfig,
    beta: float = 0.75,
    times: Optional[Sequence[float]] = None,
) -> WidthConsistencyStudy:
    """Train finite networks with the grid quadrature and compare them with the limit trajectory.

    Networks take joint SGD steps of size dt with the N^(2 beta - 1) rate factor and no
    clipping, which is the time discretization whose wide limit is the grid ODE.
    """
    check_beta(beta)
    ode = LimitOde(problem, cfg)
    times = sorted(set(times if times is not None else (0.0, cfg.horizon)))
    wanted = {int(round(t / cfg.dt)): t for t in times}
    reference: Dict[int, LimitOdeState] = {}
    Q, U = ode.initial_state().Q, ode.initial_state().U
    last = max(wanted)
    for n in range(last + 1):
        if n in wanted:
            reference[n] = LimitOdeState(wanted[n], Q.copy(), U.copy())
        if n < last:
            dQ, dU = ode.velocities(Q, U)
            Q, U = Q + cfg.dt * dQ, U + cfg.dt * dU

    rows = []
    for width in widths:
        factor = float(width) ** (2 * beta - 1)
        fam = TruncationFamily((1.0 - beta) / 5.0, width, TruncationModeChoices.IDENTITY)
        for seed in seeds:
            actor = problem.init_actor(width, beta, derived_seed(seed, 0))
            critic = problem.init_critic(width, beta, derived_seed(seed, 1))
            for n in range(last + 1):
                if n in reference:
                    distances = _network_distances(ode, actor, critic, reference[n])
                    rows.append((int(width), int(seed), reference[n].t, *distances))
                if n == last:
                    break
                critic_step = critic_gradient_step(problem, critic, actor, fam, ode.grid, ode.weights)
                actor_step = actor_gradient_step(problem, critic, actor, fam, ode.grid, weights=ode.weights)
                critic.z_net.apply_update(critic.z_net.params - critic_step.delta * (cfg.dt * cfg.omega * factor))
                actor.net.apply_update(actor.net.params - actor_step.delta * (cfg.dt * cfg.alpha * factor))
            logger.info("width %s seed %s done", width, seed)

    inversions = 0
    final_time = max(times)
    finals = [np.mean([row[3] for row in rows if row[0] == width and row[2] == final_time]) for width in widths]
    for smaller, larger in zip(finals, finals[1:]):
        if larger > smaller:
            inversions += 1
    if inversions > 1:
        logger.warning("distances to the limit are not ordered by width (%s inversions)", inversions)
    return WidthConsistencyStudy(rows, inversions)


class InitErrorStudy(NamedTuple):
    """Initial distance to the limit (gbar, 0) per width, with the fitted slope and its target 1/2 - beta."""

    rows: List[tuple]
    slope: float
    expected: float


def init_error_study(
    problem: ProblemSpec, widths: Sequence[int], seeds: Sequence[int], beta: float = 0.75, samples: int = 4096
) -> InitErrorStudy:
    """L2(mu) distance of freshly initialized networks from the limit initial state (gbar, 0)."""
    check_beta(beta)
    X = sample_interior(problem.domain, samples, np.random.default_rng(derived_seed(len(widths), samples)))
    gbar = problem.gbar.value(X)
    weights = np.full(samples, 1.0 / samples)
    rows = []
    for width in widths:
        for seed in seeds:
            actor = problem.init_actor(width, beta, derived_seed(seed, 0))
            critic = problem.init_critic(width, beta, derived_seed(seed, 1))
            rows.append(
                (int(width), int(seed), _l2(weights, critic.value(X) - gbar), _l2(weights, actor.net.forward(X)))
            )
    means = [np.mean([row[2] for row in rows if row[0] == width]) for width in widths]
    return InitErrorStudy(rows, log_log_slope(widths, means), 0.5 - beta)

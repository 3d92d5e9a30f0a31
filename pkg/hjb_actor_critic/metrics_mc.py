"""Monte Carlo value estimation by Euler-Maruyama and actor-critic agreement metrics.

Each start point has its own random stream keyed by (seed, point index), so the
results do not depend on the number of worker threads.
"""

import csv
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from hjb_actor_critic.config import McConfig
from hjb_actor_critic.domains import sample_interior
from hjb_actor_critic.fields import ScalarField
from hjb_actor_critic.pde_ops import check_finite
from hjb_actor_critic.problems import ProblemSpec
from hjb_actor_critic.util import ordered_map, point_rng

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 50
NOT_AVAILABLE = "n/a"

Policy = Callable[[np.ndarray], np.ndarray]


class PathEstimate(NamedTuple):
    """Monte Carlo estimate of the cost of following a policy from one start point."""

    x: np.ndarray
    mean: float
    std_error: float
    exit_time_mean: float
    censored_fraction: float


class HistogramBin(NamedTuple):
    """One bin of a signed-difference histogram."""

    left: float
    right: float
    count: int


class AgreementRow(NamedTuple):
    """Per-point comparison of analytic value, critic and Monte Carlo value."""

    x: np.ndarray
    V: float
    Q: float
    V_mc: float
    std_error: float
    exit_time_mean: float
    censored_fraction: float


class AgreementReport(NamedTuple):
    """Agreement metrics between V, the critic Q and the Monte Carlo value of the actor.

    E1 = mean (V - V_mc)^2, E2 = mean (V - Q)^2, E3 = mean (Q - V_mc)^2. Squared means
    satisfy E3 <= 2 (E1 + E2); ``bound_holds`` records that check.
    """

    e1: float
    e2: float
    e3: float
    rows: List[AgreementRow]
    histograms: Dict[str, List[HistogramBin]]
    bound_holds: bool


def simulate_value(
    problem: ProblemSpec,
    actor: Policy,
    x,
    cfg: McConfig,
    rng: Optional[np.random.Generator] = None,
) -> PathEstimate:
    """Estimate the discounted cost of following ``actor`` from x.

    Paths step X <- X + b dt + Phi sqrt(dt) xi until they leave the domain. The exit is
    placed by linear interpolation onto the boundary, the last step's running cost is
    counted for the interpolated fraction, and e^(-gamma tau) g(exit) is added. Paths
    still inside at max_time are censored with e^(-gamma T) gbar(X).
    """
    rng = rng if rng is not None else point_rng(cfg.seed, 0)
    x = np.asarray(x, dtype=float).ravel()
    paths = cfg.paths_per_point
    state = np.tile(x, (paths, 1))
    cost = np.zeros(paths)
    exit_time = np.full(paths, np.nan)
    alive = np.ones(paths, dtype=bool)
    domain = problem.domain
    sqrt_dt = math.sqrt(cfg.dt)
    steps = int(math.ceil(cfg.max_time / cfg.dt))
    t = 0.0
    for n in range(steps):
        rows = np.flatnonzero(alive)
        if rows.size == 0:
            break
        X = state[rows]
        A = actor(X)
        drift = check_finite("drift", problem.drift(X, A), X, A)
        diffusion = check_finite("diffusion", problem.diffusion(X, A), X, A)
        running = check_finite("running_cost", problem.running_cost(X, A), X, A)
        noise = rng.standard_normal((rows.size, problem.noise_dim))
        if problem.diffusion_diagonal:
            shock = diffusion * noise
        else:
            shock = np.einsum("mij,mj->mi", diffusion, noise)
        proposal = X + drift * cfg.dt + shock * sqrt_dt
        discount = math.exp(-problem.gamma * t)
        inside = domain.contains(proposal)
        stay = rows[inside]
        cost[stay] += discount * running[inside] * cfg.dt
        state[stay] = proposal[inside]
        if not inside.all():
            leaving = ~inside
            theta, exit_point = domain.exit_crossing(X[leaving], proposal[leaving])
            tau = t + theta * cfg.dt
            done = rows[leaving]
            cost[done] += discount * running[leaving] * theta * cfg.dt
            cost[done] += np.exp(-problem.gamma * tau) * problem.boundary(exit_point)
            exit_time[done] = tau
            state[done] = exit_point
            alive[done] = False
        t = (n + 1) * cfg.dt

    censored = alive
    if censored.any():
        cost[censored] += math.exp(-problem.gamma * t) * problem.gbar.value(state[censored])
        exit_time[censored] = t
    std_error = float(np.std(cost, ddof=1) / math.sqrt(paths)) if paths > 1 else math.nan
    return PathEstimate(x, float(np.mean(cost)), std_error, float(np.mean(exit_time)), float(np.mean(censored)))


def histogram_rows(values, bins: int = HISTOGRAM_BINS) -> List[HistogramBin]:
    """Histogram of the finite values over their observed range."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return []
    counts, edges = np.histogram(values, bins=bins)
    return [HistogramBin(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def agreement_report(
    problem: ProblemSpec,
    actor: Policy,
    critic: ScalarField,
    cfg: McConfig,
    threads: int = 1,
) -> AgreementReport:
    """Compare V, the critic and Monte Carlo values of the actor on cfg.eval_points random points.

    Without an analytic value function E1 and E2 are NaN and only E3 is meaningful.
    """
    X = sample_interior(problem.domain, cfg.eval_points, np.random.default_rng(cfg.seed))
    logger.info("Simulating %s paths from each of %s points", cfg.paths_per_point, cfg.eval_points)
    estimates = ordered_map(
        lambda index: simulate_value(problem, actor, X[index], cfg, point_rng(cfg.seed, index)),
        list(range(X.shape[0])),
        threads,
    )
    V_mc = np.array([estimate.mean for estimate in estimates])
    Q = critic.value(X)
    if problem.value_function is not None:
        V = problem.value_function.value(X)
    else:
        logger.warning("Problem %s has no analytic value function; only E3 is reported", problem.name)
        V = np.full(X.shape[0], np.nan)
    e1 = float(np.mean((V - V_mc) ** 2))
    e2 = float(np.mean((V - Q) ** 2))
    e3 = float(np.mean((Q - V_mc) ** 2))
    censored = np.mean([estimate.censored_fraction for estimate in estimates])
    if censored > 0:
        logger.warning("%.2f%% of paths hit the time cap %s and were censored", 100 * censored, cfg.max_time)
    rows = [
        AgreementRow(
            estimate.x,
            float(V[i]),
            float(Q[i]),
            estimate.mean,
            estimate.std_error,
            estimate.exit_time_mean,
            estimate.censored_fraction,
        )
        for i, estimate in enumerate(estimates)
    ]
    histograms = {
        "v_minus_vmc": histogram_rows(V - V_mc),
        "v_minus_q": histogram_rows(V - Q),
        "q_minus_vmc": histogram_rows(Q - V_mc),
    }
    bound_holds = bool(math.isnan(e1) or e3 <= 2.0 * (e1 + e2) * (1.0 + 1e-12))
    return AgreementReport(e1, e2, e3, rows, histograms, bound_holds)


def _cell(value: float) -> str:
    return NOT_AVAILABLE if math.isnan(value) else format(value, ".10g")


AGREEMENT_COLUMNS = ["x", "V", "Q", "V_mc", "stderr", "exit_mean", "censored_frac"]
HISTOGRAM_COLUMNS = ["bin_left", "bin_right", "count"]


def write_agreement_csv(path, rows: List[AgreementRow]):
    """Write per-point rows; coordinates are joined with spaces."""
    with open(Path(path), "w", newline="", encoding="UTF-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(AGREEMENT_COLUMNS)
        for row in rows:
            writer.writerow(
                [" ".join(format(value, ".10g") for value in row.x)]
                + [_cell(value) for value in (row.V, row.Q, row.V_mc, row.std_error, row.exit_time_mean)]
                + [format(row.censored_fraction, ".6g")]
            )


def write_histogram_csv(path, bins: List[HistogramBin]):
    """Write histogram rows."""
    with open(Path(path), "w", newline="", encoding="UTF-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(HISTOGRAM_COLUMNS)
        for left, right, count in bins:
            writer.writerow([format(left, ".10g"), format(right, ".10g"), count])


def summary_line(report: AgreementReport) -> Tuple[str, str, str]:
    """E1, E2, E3 formatted for printing."""
    return tuple(_cell(value) for value in (report.e1, report.e2, report.e3))

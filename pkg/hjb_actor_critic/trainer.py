"""The actor-critic training loop, metric records and evaluation against analytic solutions."""

import csv
import logging
import math
import time
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, List, NamedTuple, Optional, TextIO, Union

import numpy as np

from hjb_actor_critic.choices import PhaseChoices
from hjb_actor_critic.config import TrainConfig
from hjb_actor_critic.domains import sample_interior
from hjb_actor_critic.errors import DivergenceError, NumericError
from hjb_actor_critic.nn import ActorPolicy, CriticNet, NetParams
from hjb_actor_critic.optim import make_optimizer, scheduled_rate
from hjb_actor_critic.pde_ops import StepResult, actor_gradient_step, critic_gradient_step
from hjb_actor_critic.problems import ProblemSpec
from hjb_actor_critic.truncation import TruncationFamily
from hjb_actor_critic.util import child_seeds

logger = logging.getLogger(__name__)

EVAL_CHUNK = 4096

ProbeCallback = Callable[[int, ActorPolicy, CriticNet], None]


@dataclass(frozen=True)
class MetricsRecord:
    """One row of the metrics stream, written after each critic or actor block.

    Losses of the other phase and unavailable metrics are NaN.
    """

    cycle: int
    step: int
    phase: str
    critic_loss: float = math.nan
    actor_loss: float = math.nan
    mse_c: float = math.nan
    re_c: float = math.nan
    mse_a: float = math.nan
    re_a: float = math.nan
    elapsed_s: float = math.nan


CSV_COLUMNS = [item.name for item in fields(MetricsRecord)]


def _format(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else format(value, ".10g")
    return str(value)


class MetricsSink:
    """Consumer of metric records."""

    def write(self, record: MetricsRecord):
        """Consume one record."""
        raise NotImplementedError

    def close(self):
        """Flush and release resources."""


class ListMetricsSink(MetricsSink):
    """Keeps records in memory."""

    def __init__(self):
        """Start with no records."""
        self.records: List[MetricsRecord] = []

    def write(self, record):
        self.records.append(record)


class CsvMetricsSink(MetricsSink):
    """Writes records as CSV rows; the header is written on creation."""

    def __init__(self, target: Union[str, Path, TextIO]):
        """Open a path for writing, or use an already open text stream."""
        if isinstance(target, (str, Path)):
            self._file = open(target, "w", newline="", encoding="UTF-8")  # pylint: disable=consider-using-with
            self._owned = True
        else:
            self._file = target
            self._owned = False
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(CSV_COLUMNS)

    def write(self, record):
        self._writer.writerow([_format(value) for value in astuple(record)])
        self._file.flush()

    def close(self):
        if self._owned:
            self._file.close()


class Evaluation(NamedTuple):
    """Mean square and relative errors of critic and actor."""

    mse_c: float
    re_c: float
    mse_a: float
    re_a: float


class TrainResult(NamedTuple):
    """Final networks and every emitted record."""

    actor: ActorPolicy
    critic: CriticNet
    records: List[MetricsRecord]


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator > 0 else math.nan


def evaluate(
    problem: ProblemSpec, actor: ActorPolicy, critic: CriticNet, K: int, rng: np.random.Generator
) -> Evaluation:
    """MSE and relative error of the critic against V and the actor against u* on K fresh points.

    The relative errors are ratios of sums, sum |Q - V|^2 / sum V^2.

    Raises:
        MissingAnalyticSolutionError: when the problem has no closed-form solution.
    """
    problem.require_analytic("evaluation metrics")
    X = sample_interior(problem.domain, K, rng)
    sq_c = norm_c = sq_a = norm_a = 0.0
    for start in range(0, K, EVAL_CHUNK):
        chunk = X[start : start + EVAL_CHUNK]
        V = problem.value_function.value(chunk)
        u = problem.optimal_control(chunk)
        sq_c += float(np.sum((critic.value(chunk) - V) ** 2))
        norm_c += float(np.sum(V**2))
        sq_a += float(np.sum((actor(chunk) - u) ** 2))
        norm_a += float(np.sum(u**2))
    return Evaluation(sq_c / K, _ratio(sq_c, norm_c), sq_a / K, _ratio(sq_a, norm_a))


def final_window_mean(records: Iterable[MetricsRecord], attribute: str, fraction: float = 0.1) -> float:
    """Mean of a metric over the last fraction of the records where it is available."""
    values = [getattr(record, attribute) for record in records]
    values = [value for value in values if not math.isnan(value)]
    if not values:
        return math.nan
    window = max(1, math.ceil(fraction * len(values)))
    return float(np.mean(values[-window:]))


class Trainer:
    """Runs alternating critic and actor update blocks on one problem."""

    def __init__(
        self,
        problem: ProblemSpec,
        cfg: TrainConfig,
        sink: Optional[MetricsSink] = None,
        threads: int = 1,
    ):
        """Prepare a run; networks are created in run() unless supplied there."""
        self.problem = problem
        self.cfg = cfg
        self.sink = sink
        self.threads = threads
        self.records: List[MetricsRecord] = []
        self._actor_seed, self._critic_seed, self._batch_seed, self._eval_seed = child_seeds(cfg.seed, 4)
        self.critic_truncation = TruncationFamily.for_width(
            cfg.critic_width, cfg.beta, cfg.truncation_delta, cfg.truncation
        )
        self.actor_truncation = TruncationFamily.for_width(cfg.width, cfg.beta, cfg.truncation_delta, cfg.truncation)
        if cfg.include_ntk_rate_factor:
            self.critic_rate_factor = float(cfg.critic_width) ** (2 * cfg.beta - 1)
            self.actor_rate_factor = float(cfg.width) ** (2 * cfg.beta - 1)
        else:
            self.critic_rate_factor = self.actor_rate_factor = 1.0

    def initial_networks(self):
        """Actor and critic drawn from the initialization law with seeds derived from the run seed."""
        actor = self.problem.init_actor(self.cfg.width, self.cfg.beta, self._actor_seed)
        critic = self.problem.init_critic(self.cfg.critic_width, self.cfg.beta, self._critic_seed)
        return actor, critic

    def _emit(self, record: MetricsRecord):
        self.records.append(record)
        if self.sink is not None:
            self.sink.write(record)

    def _checked_step(self, func, phase, cycle, step, last_good, **kwargs) -> StepResult:
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                result = func(**kwargs)
        except NumericError as ex:
            logger.error("Numeric failure during %s step %s of cycle %s: %s", phase, step, cycle, ex)
            raise DivergenceError(str(ex), cycle, step, phase, *last_good) from ex
        if not math.isfinite(result.loss) or abs(result.loss) > self.cfg.divergence_threshold:
            logger.error("%s loss %.6g out of range at step %s of cycle %s", phase, result.loss, step, cycle)
            raise DivergenceError(f"{phase} loss {result.loss:.6g} out of range", cycle, step, phase, *last_good)
        return result

    @staticmethod
    def _update(net, optimizer, grad: NetParams, lr: float, phase, cycle, step, last_good):
        updated = optimizer.step(net.params, grad, lr)
        if not updated.is_finite():
            raise DivergenceError("non-finite parameters after update", cycle, step, phase, *last_good)
        net.apply_update(updated)

    def run(
        self,
        actor: Optional[ActorPolicy] = None,
        critic: Optional[CriticNet] = None,
        probes: Optional[Iterable[int]] = None,
        on_probe: Optional[ProbeCallback] = None,
    ) -> TrainResult:
        """Train for cfg.total_cycles cycles.

        Args:
            actor: starting actor (mutated in place); a fresh one by default.
            critic: starting critic (mutated in place); a fresh one by default.
            probes: completed-cycle counts at which on_probe receives copies of the networks; 0 is the start.
            on_probe: callback for probes.

        Raises:
            DivergenceError: carrying the networks from the end of the last completed cycle.
        """
        cfg = self.cfg
        problem = self.problem
        if actor is None or critic is None:
            fresh_actor, fresh_critic = self.initial_networks()
            actor = fresh_actor if actor is None else actor
            critic = fresh_critic if critic is None else critic
        probes = set(probes or ())
        rng = np.random.default_rng(self._batch_seed)
        critic_optimizer = make_optimizer(cfg.optimizer)
        actor_optimizer = make_optimizer(cfg.optimizer)
        start = time.perf_counter()
        step = 0
        last_good = (actor.copy(), critic.copy())
        if on_probe is not None and 0 in probes:
            on_probe(0, actor.copy(), critic.copy())

        for cycle in range(cfg.total_cycles):
            lr_critic = scheduled_rate(cfg.base_lr_critic, cycle, cfg.scheduler)
            lr_actor = scheduled_rate(cfg.base_lr_actor, cycle, cfg.scheduler)

            losses = []
            for _ in range(cfg.critic_steps_per_cycle):
                step += 1
                result = self._checked_step(
                    critic_gradient_step,
                    PhaseChoices.CRITIC,
                    cycle,
                    step,
                    last_good,
                    problem=problem,
                    critic=critic,
                    actor=actor,
                    fam=self.critic_truncation,
                    batch=sample_interior(problem.domain, cfg.m_critic, rng),
                    threads=self.threads,
                )
                losses.append(result.loss)
                self._update(
                    critic.z_net,
                    critic_optimizer,
                    result.delta * self.critic_rate_factor,
                    lr_critic,
                    PhaseChoices.CRITIC,
                    cycle,
                    step,
                    last_good,
                )
            critic_loss = float(np.mean(losses)) if losses else math.nan
            self._emit(
                MetricsRecord(
                    cycle,
                    step,
                    str(PhaseChoices.CRITIC),
                    critic_loss=critic_loss,
                    elapsed_s=time.perf_counter() - start,
                )
            )

            losses = []
            for _ in range(cfg.actor_steps_per_cycle):
                step += 1
                result = self._checked_step(
                    actor_gradient_step,
                    PhaseChoices.ACTOR,
                    cycle,
                    step,
                    last_good,
                    problem=problem,
                    critic=critic,
                    actor=actor,
                    fam=self.actor_truncation,
                    batch=sample_interior(problem.domain, cfg.m_actor, rng),
                    loss_floor=cfg.loss_floor,
                    threads=self.threads,
                )
                losses.append(result.loss)
                self._update(
                    actor.net,
                    actor_optimizer,
                    result.delta * self.actor_rate_factor,
                    lr_actor,
                    PhaseChoices.ACTOR,
                    cycle,
                    step,
                    last_good,
                )
            actor_loss = float(np.mean(losses)) if losses else math.nan

            metrics = Evaluation(math.nan, math.nan, math.nan, math.nan)
            if problem.has_analytic and ((cycle + 1) % cfg.eval_every == 0 or cycle + 1 == cfg.total_cycles):
                metrics = evaluate(problem, actor, critic, cfg.eval_points, np.random.default_rng(self._eval_seed))
            self._emit(
                MetricsRecord(
                    cycle,
                    step,
                    str(PhaseChoices.ACTOR),
                    actor_loss=actor_loss,
                    elapsed_s=time.perf_counter() - start,
                    **metrics._asdict(),
                )
            )
            logger.info(
                "cycle %s: critic loss %.4g, actor loss %.4g, critic MSE %.4g, actor MSE %.4g",
                cycle,
                critic_loss,
                actor_loss,
                metrics.mse_c,
                metrics.mse_a,
            )
            last_good = (actor.copy(), critic.copy())
            if on_probe is not None and cycle + 1 in probes:
                on_probe(cycle + 1, actor.copy(), critic.copy())

        return TrainResult(actor, critic, list(self.records))


def train(
    problem: ProblemSpec,
    cfg: TrainConfig,
    sink: Optional[MetricsSink] = None,
    actor: Optional[ActorPolicy] = None,
    critic: Optional[CriticNet] = None,
    probes: Optional[Iterable[int]] = None,
    on_probe: Optional[ProbeCallback] = None,
    threads: int = 1,
) -> TrainResult:
    """Run the actor-critic algorithm; see Trainer.run."""
    return Trainer(problem, cfg, sink, threads).run(actor, critic, probes, on_probe)

"""Test the training loop, metric records and evaluation."""

import dataclasses
import io
import math
import unittest

import numpy as np

from hjb_actor_critic.config import TrainConfig
from hjb_actor_critic.domains import sample_interior
from hjb_actor_critic.errors import DivergenceError, MissingAnalyticSolutionError
from hjb_actor_critic.problems import preset
from hjb_actor_critic.tests.util import fitted_pair, slow_test
from hjb_actor_critic.trainer import (
    CSV_COLUMNS,
    CsvMetricsSink,
    ListMetricsSink,
    MetricsRecord,
    Trainer,
    evaluate,
    final_window_mean,
    train,
)

TINY = {
    "width": 16,
    "critic_width": 16,
    "critic_steps_per_cycle": 2,
    "actor_steps_per_cycle": 2,
    "m_critic": 64,
    "m_actor": 64,
    "total_cycles": 3,
    "eval_points": 200,
    "optimizer": "sgd",
    "base_lr_actor": 1e-2,
    "base_lr_critic": 1e-2,
}


def tiny_config(**overrides) -> TrainConfig:
    return TrainConfig.from_mapping(TINY, **overrides)


def _without_time(records):
    return [dataclasses.replace(record, elapsed_s=math.nan) for record in records]


class TestTrainer(unittest.TestCase):
    """Test short training runs."""

    def setUp(self):
        self.problem = preset("problem1", 2)

    def test_records(self):
        sink = ListMetricsSink()
        result = train(self.problem, tiny_config(), sink)
        self.assertEqual(6, len(result.records))
        self.assertEqual(result.records, sink.records)
        self.assertEqual(["critic", "actor"] * 3, [record.phase for record in result.records])
        self.assertEqual([2, 4, 6, 8, 10, 12], [record.step for record in result.records])
        critic_record, actor_record = result.records[:2]
        self.assertTrue(math.isnan(critic_record.actor_loss))
        self.assertTrue(math.isnan(critic_record.mse_c))
        self.assertTrue(math.isfinite(critic_record.critic_loss))
        self.assertTrue(math.isfinite(actor_record.actor_loss))
        self.assertTrue(math.isfinite(actor_record.re_a))

    def test_csv_stream(self):
        stream = io.StringIO()
        train(self.problem, tiny_config(total_cycles=1), CsvMetricsSink(stream))
        lines = stream.getvalue().splitlines()
        self.assertEqual(",".join(CSV_COLUMNS), lines[0])
        self.assertEqual(3, len(lines))
        self.assertTrue(lines[1].startswith("0,2,critic,"))
        self.assertIn(",,", lines[1])

    def test_zero_cycles(self):
        stream = io.StringIO()
        result = train(self.problem, tiny_config(total_cycles=0), CsvMetricsSink(stream))
        self.assertEqual([], result.records)
        self.assertEqual(",".join(CSV_COLUMNS) + "\n", stream.getvalue())

    def test_zero_learning_rate_is_stationary(self):
        result = train(self.problem, tiny_config(base_lr_actor=0.0, base_lr_critic=0.0))
        actor_records = [record for record in result.records if record.phase == "actor"]
        self.assertEqual(3, len({record.cycle for record in actor_records}))
        self.assertEqual(1, len({record.mse_c for record in actor_records}))
        self.assertEqual(1, len({record.mse_a for record in actor_records}))

    def test_reproducible(self):
        first = train(self.problem, tiny_config(seed=4))
        second = train(self.problem, tiny_config(seed=4), threads=3)
        self.assertEqual(_without_time(first.records), _without_time(second.records))
        np.testing.assert_array_equal(first.actor.net.outer, second.actor.net.outer)
        other = train(self.problem, tiny_config(seed=5))
        self.assertNotEqual(first.records[0].critic_loss, other.records[0].critic_loss)

    def test_eval_every(self):
        result = train(self.problem, tiny_config(total_cycles=3, eval_every=2))
        evaluated = [not math.isnan(record.mse_c) for record in result.records if record.phase == "actor"]
        self.assertEqual([False, True, True], evaluated)

    def test_divergence(self):
        trainer = Trainer(self.problem, tiny_config(divergence_threshold=1e-12))
        initial_actor, _ = trainer.initial_networks()
        with self.assertRaises(DivergenceError) as context:
            trainer.run()
        error = context.exception
        self.assertEqual((0, 1, "critic"), (error.cycle, error.step, str(error.phase)))
        np.testing.assert_array_equal(initial_actor.net.outer, error.actor.net.outer)
        self.assertIsNotNone(error.critic)

    def test_probes(self):
        seen = []
        train(self.problem, tiny_config(), probes=[0, 2], on_probe=lambda cycle, actor, critic: seen.append(cycle))
        self.assertEqual([0, 2], seen)

    def test_rate_factor(self):
        trainer = Trainer(self.problem, tiny_config(include_ntk_rate_factor=True, beta=0.75))
        self.assertAlmostEqual(16**0.5, trainer.actor_rate_factor)
        self.assertEqual(1.0, Trainer(self.problem, tiny_config()).critic_rate_factor)

    def test_problem_without_solution(self):
        problem = dataclasses.replace(self.problem, value_function=None)
        result = train(problem, tiny_config(total_cycles=1))
        self.assertTrue(math.isnan(result.records[-1].mse_c))


class TestEvaluate(unittest.TestCase):
    """Test evaluate and final_window_mean."""

    def test_ratio_of_sums(self):
        problem = preset("toy1d")
        actor, critic = fitted_pair(problem, width=64, points=500)
        got = evaluate(problem, actor, critic, 300, np.random.default_rng(1))
        X = sample_interior(problem.domain, 300, np.random.default_rng(1))
        V = problem.value_function.value(X)
        u = problem.optimal_control(X)
        self.assertAlmostEqual(np.mean((critic.value(X) - V) ** 2), got.mse_c)
        self.assertAlmostEqual(np.sum((critic.value(X) - V) ** 2) / np.sum(V**2), got.re_c)
        self.assertAlmostEqual(np.sum((actor(X) - u) ** 2) / np.sum(u**2), got.re_a)
        self.assertLess(got.re_c, 1e-4)

    def test_requires_solution(self):
        problem = dataclasses.replace(preset("toy1d"), optimal_control=None)
        actor, critic = problem.init_actor(8, 0.75, 0), problem.init_critic(8, 0.75, 1)
        with self.assertRaises(MissingAnalyticSolutionError):
            evaluate(problem, actor, critic, 10, np.random.default_rng(0))

    def test_final_window_mean(self):
        records = [MetricsRecord(cycle, cycle, "actor", mse_c=float(cycle)) for cycle in range(20)]
        records.append(MetricsRecord(20, 20, "critic"))
        self.assertEqual(18.5, final_window_mean(records, "mse_c"))
        self.assertEqual(19.0, final_window_mean(records[:5] + records[-2:], "mse_c", fraction=0.01))
        self.assertTrue(math.isnan(final_window_mean(records, "actor_loss")))


class TestReproductionRuns(unittest.TestCase):
    """Long runs with the default budgets; enabled with HJBAC_SLOW_TESTS=1."""

    @slow_test
    def test_lqr(self):
        result = train(preset("lqr", 10), TrainConfig(total_cycles=30))
        self.assertLess(final_window_mean(result.records, "re_c"), 1e-4)
        self.assertLess(final_window_mean(result.records, "re_a"), 1e-2)

    @slow_test
    def test_lqr_high_dimension_completes(self):
        result = train(preset("lqr", 50), TrainConfig(total_cycles=3))
        self.assertEqual(6, len(result.records))
        self.assertTrue(math.isfinite(final_window_mean(result.records, "mse_c")))
        self.assertTrue(result.critic.z_net.params.is_finite())

    @slow_test
    def test_problem1(self):
        # One epoch is one cycle of 100 critic and 200 actor steps.
        result = train(preset("problem1", 10), TrainConfig(total_cycles=2000, eval_every=50))
        self.assertLess(final_window_mean(result.records, "mse_c"), 7.8e-4)
        self.assertLess(final_window_mean(result.records, "mse_a"), 5.3e-3)

    @slow_test
    def test_convex_and_nonconvex_hamiltonians(self):
        cfg = TrainConfig(total_cycles=40)
        convex = final_window_mean(train(preset("problem2b"), cfg).records, "mse_a")
        nonconvex = final_window_mean(train(preset("problem2a_zeta_star"), cfg).records, "mse_a")
        self.assertLessEqual(convex, 1e-2)
        self.assertGreaterEqual(nonconvex, 1e-2)
        self.assertGreaterEqual(nonconvex, 10.0 * convex)

    @slow_test
    def test_loss_floor_stabilizes_problem3(self):
        problem = preset("problem3")
        floored = train(problem, TrainConfig(total_cycles=30, loss_floor=-10.0))
        self.assertLessEqual(final_window_mean(floored.records, "mse_c"), 5e-2)
        floored_actor = final_window_mean(floored.records, "mse_a")
        self.assertLessEqual(floored_actor, 5e-1)
        try:
            free = train(problem, TrainConfig(total_cycles=30))
        except DivergenceError:
            return
        free_actor = final_window_mean(free.records, "mse_a")
        self.assertGreater(free_actor, 1.0)
        self.assertLess(floored_actor, free_actor)

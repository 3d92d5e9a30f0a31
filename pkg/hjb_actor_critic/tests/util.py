"""Utilities for setting up tests and test data."""

import os
import unittest

import numpy as np

from hjb_actor_critic.domains import sample_interior
from hjb_actor_critic.nn import InitSpec, ShallowNet, fit_to_targets, init_net

SLOW_TESTS = os.environ.get("HJBAC_SLOW_TESTS", "") == "1"

slow_test = unittest.skipUnless(SLOW_TESTS, "long reproduction run; set HJBAC_SLOW_TESTS=1")


def small_net(width=16, d=3, k=1, beta=0.75, seed=0) -> ShallowNet:
    """A small freshly initialized network."""
    return init_net(width, d, k, beta, InitSpec(seed))


def central_difference(func, x, step=1e-5):
    """Central differences of func in each coordinate of x; row i is the derivative along x_i."""
    x = np.asarray(x, dtype=float)
    rows = []
    for index in range(x.size):
        plus = x.copy()
        minus = x.copy()
        plus.flat[index] += step
        minus.flat[index] -= step
        rows.append((np.asarray(func(plus), dtype=float) - np.asarray(func(minus), dtype=float)) / (2.0 * step))
    return np.array(rows).reshape(x.shape + np.shape(rows[0]))


def relative_error(got, want) -> float:
    """max |got - want| / max(1, max |want|)."""
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    return float(np.max(np.abs(got - want)) / max(1.0, float(np.max(np.abs(want)))))


def fitted_pair(problem, width=256, beta=0.75, seed=0, points=4000):
    """Actor and critic whose outer layers are least-squares fits of u* and V."""
    X = sample_interior(problem.domain, points, np.random.default_rng(seed))
    actor_net = fit_to_targets(
        init_net(width, problem.dim, problem.action_dim, beta, InitSpec(seed)), X, problem.optimal_control(X)
    )
    critic_net = fit_to_targets(
        init_net(width, problem.dim, 1, beta, InitSpec(seed + 1)),
        X,
        problem.value_function.value(X) - problem.gbar.value(X),
        row_scale=problem.eta.value(X),
    )
    return problem.make_actor(actor_net), problem.make_critic(critic_net)

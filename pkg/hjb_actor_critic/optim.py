"""Parameter update rules and learning rate schedules."""

from typing import Optional

import numpy as np

from hjb_actor_critic.choices import OptimizerChoices, SchedulerChoices
from hjb_actor_critic.errors import ConfigurationError
from hjb_actor_critic.nn import NetParams


def scheduled_rate(base: float, cycle: int, scheduler: SchedulerChoices) -> float:
    """Learning rate for the given cycle: constant, or base / (1 + cycle)."""
    scheduler = SchedulerChoices(scheduler)
    if scheduler == SchedulerChoices.INVERSE_CYCLE:
        return base / (1.0 + cycle)
    return base


class Optimizer:
    """Base class: turns a gradient estimate into new parameters."""

    def step(self, params: NetParams, grad: NetParams, lr: float) -> NetParams:
        """Return the updated parameters."""
        raise NotImplementedError


class SGD(Optimizer):
    """Plain gradient descent, params - lr * grad."""

    def step(self, params, grad, lr):
        return params - grad * lr


class Adam(Optimizer):
    """Adam with bias corrected first and second moment estimates.

    One instance keeps the moment state of one network.
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        """Create an Adam optimizer with the usual defaults."""
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ConfigurationError(f"Adam moment coefficients must lie in [0, 1), got {beta1}, {beta2}")
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Optional[NetParams] = None
        self.v: Optional[NetParams] = None

    def step(self, params, grad, lr):
        if self.m is None:
            self.m = grad.zeros_like()
            self.v = grad.zeros_like()
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        updated = []
        for index, (param, g) in enumerate(zip(params.arrays(), grad.arrays())):
            m = self.m.arrays()[index]
            v = self.v.arrays()[index]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            updated.append(param - lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps))
        return NetParams(*updated)


def make_optimizer(choice: OptimizerChoices) -> Optimizer:
    """Optimizer instance for a config choice."""
    choice = OptimizerChoices(choice)
    if choice == OptimizerChoices.ADAM:
        return Adam()
    return SGD()

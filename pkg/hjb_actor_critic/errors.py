"""Module containing error Exception classes specific to the HJB actor-critic solver."""

from typing import TYPE_CHECKING, Iterable, Optional

import numpy as np

if TYPE_CHECKING:
    from hjb_actor_critic.nn import ActorPolicy, CriticNet


def _point_str(point) -> str:
    if point is None:
        return "unknown point"
    array = np.atleast_1d(np.asarray(point, dtype=float))
    if array.size > 6:
        head = ", ".join(f"{value:.6g}" for value in array[:6])
        return f"({head}, ... {array.size} coordinates)"
    return "(" + ", ".join(f"{value:.6g}" for value in array) + ")"


class HJBError(Exception):
    """Parent class for every error raised by the solver."""


class ConfigurationError(HJBError, ValueError):
    """Raised when a network, problem, optimizer or study is configured with invalid values."""

    def __init__(self, message, field=None):
        """Constructor to populate exception with message and the offending field name.

        Args:
            message (str): Description of what is wrong.
            field (str): Optional name (or dotted path) of the offending setting.
        """
        if field:
            super().__init__(f"{message} (setting `{field}`)")
        else:
            super().__init__(message)
        self.field = field


class UnknownProblemError(ConfigurationError):
    """Raised when a problem name does not exist in the preset catalog."""

    def __init__(self, name: str, catalog: Iterable[str]):
        """Create an UnknownProblemError.

        Args:
            name: The requested problem name.
            catalog: The names that are available.
        """
        self.name = name
        self.catalog = sorted(catalog)
        listing = "\n".join(f"  - {entry}" for entry in self.catalog)
        super().__init__(f"Unknown problem `{name}`. Available problems:\n{listing}")


class UnknownStudyError(ConfigurationError):
    """Raised when a study name is not one of the shipped studies."""

    def __init__(self, name: str, studies: Iterable[str]):
        """Create an UnknownStudyError naming the available studies."""
        self.name = name
        super().__init__(f"Unknown study `{name}`. Available studies: {', '.join(sorted(studies))}")


class MissingAnalyticSolutionError(HJBError):
    """Raised when a metric needs the analytic (V, u*) pair but the problem does not have one."""

    def __init__(self, problem_name: str, metric: str = "metric"):
        """Constructor naming the problem and the metric that needed the analytic solution."""
        super().__init__(f"Problem {problem_name} has no analytic solution; cannot compute {metric}")
        self.problem_name = problem_name


class CheckpointError(HJBError):
    """Raised when a checkpoint cannot be read or does not fit the problem it is used with."""


class NumericError(HJBError, ArithmeticError):
    """Raised when a coefficient or network evaluation produces non-finite values.

    The error keeps the first offending point and action so that the location of
    the problem can be reported back to the user.
    """

    def __init__(self, message, coefficient=None, point=None, action=None):
        """Initialize a NumericError.

        Args:
            message (str): Description of the failure.
            coefficient (str): Name of the coefficient that failed ("drift", "diffusion", "running_cost", ...).
            point: The state at which the failure was detected.
            action: The action at which the failure was detected.
        """
        self.coefficient = coefficient
        self.point = point
        self.action = action
        details = []
        if coefficient:
            details.append(f"coefficient {coefficient}")
        if point is not None:
            details.append(f"x={_point_str(point)}")
        if action is not None:
            details.append(f"a={_point_str(action)}")
        if details:
            message = f"{message} [{'; '.join(details)}]"
        super().__init__(message)


class DivergenceError(NumericError):
    """Raised by the trainer when a loss becomes non-finite or exceeds the divergence threshold.

    The last good actor and critic (taken at the end of the last completed cycle)
    travel with the error so that callers can still write a checkpoint.
    """

    def __init__(
        self,
        message,
        cycle: int,
        step: int,
        phase: str,
        actor: Optional["ActorPolicy"] = None,
        critic: Optional["CriticNet"] = None,
    ):
        """Create a DivergenceError with the training position and last good networks."""
        self.cycle = cycle
        self.step = step
        self.phase = phase
        self.actor = actor
        self.critic = critic
        super().__init__(f"{message} during {phase} step {step} of cycle {cycle}")


class StepSizeError(NumericError):
    """Raised when the explicit limit ODE integration explodes."""

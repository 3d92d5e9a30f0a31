"""Choices used within the solver configuration."""

from enum import Enum


class ChoiceSet(str, Enum):
    """Base class for string valued choice sets."""

    @classmethod
    def values(cls):
        """All the raw string values of the choice set."""
        return [member.value for member in cls]

    def __str__(self):
        """Render as the raw value, which is what config files and CSV files contain."""
        return self.value


class OptimizerChoices(ChoiceSet):
    """Parameter update rules available to the trainer."""

    SGD = "sgd"
    ADAM = "adam"


class SchedulerChoices(ChoiceSet):
    """Learning rate schedules indexed by the cycle count."""

    CONSTANT = "constant"
    INVERSE_CYCLE = "inverse_cycle"


class TruncationModeChoices(ChoiceSet):
    """Gradient clipping modes."""

    SMOOTH = "smooth"
    IDENTITY = "identity"


class DomainKindChoices(ChoiceSet):
    """Shapes of the state space."""

    BALL = "ball"
    BOX = "box"


class PhaseChoices(ChoiceSet):
    """Phases of one training cycle, as written to the metrics stream."""

    CRITIC = "critic"
    ACTOR = "actor"


class ActivationChoices(ChoiceSet):
    """Hidden layer activation functions."""

    TANH = "tanh"

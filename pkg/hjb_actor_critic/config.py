"""Run configuration: dataclasses with defaults, file loading and schema validation."""

import dataclasses
import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar

import jsonschema
from jsonschema.exceptions import best_match

from hjb_actor_critic.choices import OptimizerChoices, SchedulerChoices, TruncationModeChoices
from hjb_actor_critic.errors import ConfigurationError
from hjb_actor_critic.util import load_config_file

logger = logging.getLogger(__name__)

SCHEMA_PATH = Path(__file__).parent / "train-config-schema.json"

C = TypeVar("C", bound="_ConfigBase")


@lru_cache(maxsize=1)
def load_schema() -> dict:
    """Load the JSON schema shipped with the package."""
    return json.loads(SCHEMA_PATH.read_text(encoding="UTF-8"))


def validate_mapping(mapping: Mapping[str, Any], section: str):
    """Validate a flat config mapping against one section of the schema.

    Raises:
        ConfigurationError: naming the offending field, with the jsonschema error as cause.
    """
    validator = jsonschema.Draft202012Validator(load_schema()["$defs"][section])
    error = best_match(validator.iter_errors(dict(mapping)))
    if error is not None:
        field = ".".join(str(part) for part in error.absolute_path) or None
        raise ConfigurationError(f"Invalid {section} configuration: {error.message}", field=field) from error


def check_beta(beta: float, field: str = "beta"):
    """Raise ConfigurationError unless 1/2 < beta < 1."""
    if not 0.5 < beta < 1.0:
        raise ConfigurationError(f"beta must lie strictly inside (0.5, 1.0), got {beta}", field=field)


def _check_positive(config, *names):
    for name in names:
        value = getattr(config, name)
        if value is None or value <= 0:
            raise ConfigurationError(f"{name} must be positive, got {value}", field=name)


def _check_non_negative(config, *names):
    for name in names:
        value = getattr(config, name)
        if value < 0:
            raise ConfigurationError(f"{name} must not be negative, got {value}", field=name)


class _ConfigBase:
    """Shared loading behavior for the config dataclasses."""

    schema_section: str = ""
    _choice_fields: Dict[str, type] = {}

    @classmethod
    def from_mapping(cls: Type[C], mapping: Optional[Mapping[str, Any]] = None, **overrides) -> C:
        """Build a config from a flat mapping plus keyword overrides.

        Overrides whose value is None are ignored so that unset CLI flags fall through
        to the file value or the default.
        """
        merged = dict(mapping or {})
        merged.update({key: value for key, value in overrides.items() if value is not None})
        validate_mapping(merged, cls.schema_section)
        for name, choices in cls._choice_fields.items():
            if name in merged:
                merged[name] = choices(merged[name])
        config = cls(**merged)
        config.validate()
        return config

    @classmethod
    def from_file(cls: Type[C], filename: str, **overrides) -> C:
        """Load a config file (YAML or JSON, "-" for stdin) and apply overrides."""
        logger.debug("Loading %s from %s", cls.__name__, filename)
        return cls.from_mapping(load_config_file(filename), **overrides)

    def to_dict(self) -> Dict[str, Any]:
        """Plain JSON-serializable representation."""
        data = dataclasses.asdict(self)
        for name in self._choice_fields:
            if data.get(name) is not None:
                data[name] = str(data[name])
        return data

    def replace(self: C, **changes) -> C:
        """Copy with changes applied, validated again."""
        config = dataclasses.replace(self, **changes)
        config.validate()
        return config

    def validate(self):
        """Semantic checks the schema cannot express."""


@dataclass(frozen=True)
class TrainConfig(_ConfigBase):
    """Hyperparameters of one actor-critic training run.

    Defaults follow the published experiments where they are stated (width 512,
    100 critic then 200 actor steps per cycle, Adam with the usual moments).
    """

    width: int = 512
    critic_width: int = 512
    beta: float = 0.75
    critic_steps_per_cycle: int = 100
    actor_steps_per_cycle: int = 200
    m_critic: int = 1024
    m_actor: int = 1024
    optimizer: OptimizerChoices = OptimizerChoices.ADAM
    base_lr_actor: float = 1e-3
    base_lr_critic: float = 1e-3
    scheduler: SchedulerChoices = SchedulerChoices.CONSTANT
    total_cycles: int = 100
    truncation: TruncationModeChoices = TruncationModeChoices.SMOOTH
    truncation_delta: Optional[float] = None
    loss_floor: Optional[float] = None
    include_ntk_rate_factor: bool = False
    seed: int = 0
    eval_points: int = 10000
    eval_every: int = 1
    divergence_threshold: float = 1e12

    schema_section = "train"
    _choice_fields = {
        "optimizer": OptimizerChoices,
        "scheduler": SchedulerChoices,
        "truncation": TruncationModeChoices,
    }

    def validate(self):
        """Check counts, rates and beta."""
        check_beta(self.beta)
        _check_positive(
            self,
            "width",
            "critic_width",
            "m_critic",
            "m_actor",
            "eval_points",
            "eval_every",
            "divergence_threshold",
        )
        _check_non_negative(
            self, "critic_steps_per_cycle", "actor_steps_per_cycle", "total_cycles", "base_lr_actor", "base_lr_critic"
        )
        if self.truncation_delta is not None and not 0 < self.truncation_delta < (1 - self.beta) / 4:
            raise ConfigurationError(
                f"truncation_delta must lie in (0, (1 - beta) / 4) = (0, {(1 - self.beta) / 4:g})",
                field="truncation_delta",
            )


@dataclass(frozen=True)
class McConfig(_ConfigBase):
    """Euler-Maruyama settings for Monte Carlo value estimation."""

    dt: float = 0.001
    paths_per_point: int = 2000
    eval_points: int = 1000
    max_time: float = 200.0
    seed: int = 0

    schema_section = "monte_carlo"

    def validate(self):
        """Step and caps must be positive."""
        _check_positive(self, "dt", "paths_per_point", "eval_points", "max_time")


@dataclass(frozen=True)
class LimitOdeConfig(_ConfigBase):
    """Settings for integrating the wide-network limit dynamics on a grid."""

    grid_points: int = 41
    kernel_samples: int = 20000
    dt: float = 1e-3
    horizon: float = 50.0
    omega: float = 1.0
    alpha: float = 1.0
    seed: int = 0
    record_every: float = 1.0
    explosion_threshold: float = 1e8
    cache_dir: Optional[str] = None

    schema_section = "limit_ode"

    def validate(self):
        """Grid and integration settings must be usable."""
        _check_positive(self, "kernel_samples", "dt", "record_every", "explosion_threshold")
        _check_non_negative(self, "horizon", "omega", "alpha")
        if self.grid_points < 3:
            raise ConfigurationError("grid_points must be at least 3", field="grid_points")

"""Sub-commands of the hjbac command line tool."""

import json
from pathlib import Path
from typing import Optional

from hjb_actor_critic.config import TrainConfig
from hjb_actor_critic.errors import ConfigurationError
from hjb_actor_critic.util import load_config_file


def output_dir(out: Optional[str], default: str) -> Path:
    """Create and return the output directory."""
    path = Path(out or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_train_config(filename: Optional[str], seed: Optional[int], **overrides) -> TrainConfig:
    """Defaults < config file < command line overrides < --seed."""
    mapping = load_config_file(filename) if filename else {}
    if seed is not None:
        overrides["seed"] = seed
    return TrainConfig.from_mapping(mapping, **overrides)


def write_json(path: Path, document: dict):
    """Write a JSON document with stable key order."""
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="UTF-8")


def recorded_options(options: dict) -> dict:
    """Options as stored in a run manifest; they must be JSON serializable."""
    recorded = {}
    for key, value in options.items():
        if not isinstance(value, (str, int, float, bool, list, type(None))):
            raise ConfigurationError(f"option {key} of type {type(value).__name__} cannot be recorded", field=key)
        recorded[key] = value
    return recorded

"""Jinja2 environment and Markdown report rendering for training and verification runs."""

import logging
import math
import os
from pathlib import Path
from typing import Any, Mapping

from jinja2 import Environment, FileSystemLoader, StrictUndefined

logger = logging.getLogger(__name__)

TEMPLATE_DIR = os.path.join(os.path.dirname(__file__), "templates")


def sci(value: Any, digits: int = 4) -> str:
    """Jinja2 filter rendering a number in scientific notation, NaN and None as "n/a".

    Example:
    ```jinja
          {{ report.e1 | sci }}
    ```
    """
    if value is None:
        return "n/a"
    value = float(value)
    if math.isnan(value):
        return "n/a"
    return f"{value:.{digits}e}"


def new_template_environment(base_dir=None) -> Environment:
    """Create a template environment that fails on undefined variables.

    Args:
        base_dir (str): Path, or list of paths, to search for templates. Defaults to the
            package's own templates directory.

    Returns:
        Environment: Jinja environment with the report filters registered.
    """
    env = Environment(
        loader=FileSystemLoader(base_dir or TEMPLATE_DIR),
        trim_blocks=True,
        lstrip_blocks=True,
        undefined=StrictUndefined,
        autoescape=False,  # nosec B701 - Markdown output, never served as HTML
        keep_trailing_newline=True,
    )
    env.filters["sci"] = sci
    return env


def render_report(template_name: str, context: Mapping[str, Any], path=None, env=None) -> str:
    """Render a template and optionally write it to path.

    Returns:
        str: The rendered text.
    """
    env = env or new_template_environment()
    text = env.get_template(template_name).render(**context)
    if path is not None:
        Path(path).write_text(text, encoding="UTF-8")
        logger.debug("Wrote report %s", path)
    return text


def render_training_report(path, problem, cfg, result, final_metrics: Mapping[str, float], diverged=None) -> str:
    """Write training_report.md: problem, the resolved config and the final-window metrics."""
    return render_report(
        "training_report.md.j2",
        {
            "problem": problem,
            "config": cfg.to_dict(),
            "cycles": len({record.cycle for record in result.records}) if result is not None else 0,
            "final": final_metrics,
            "diverged": diverged,
        },
        path,
    )


def render_agreement_report(path, problem, cfg, report, histogram_files: Mapping[str, str]) -> str:
    """Write agreement_report.md for a Monte Carlo verification run."""
    censored = [row.censored_fraction for row in report.rows]
    return render_report(
        "agreement_report.md.j2",
        {
            "problem": problem,
            "config": cfg.to_dict(),
            "report": report,
            "censored": sum(censored) / len(censored) if censored else 0.0,
            "histogram_files": histogram_files,
        },
        path,
    )

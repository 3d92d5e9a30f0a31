"""Helper functions shared by the solver modules: config file loading, threading and seeding."""

import csv
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np
import yaml

from hjb_actor_critic.errors import ConfigurationError

logger = logging.getLogger(__name__)

THREADS_ENV = "HJBAC_THREADS"

# Fixed chunk length for batch evaluation. Chunk boundaries never depend on the
# thread count, so reductions in chunk order are bit-reproducible.
CHUNK_SIZE = 256

T = TypeVar("T")


def load_config_file(filename: str) -> dict:
    """Load a flat mapping from a YAML or JSON file.

    Args:
        filename (str): Path of the file, or "-" to read from stdin.

    Raises:
        ConfigurationError: If the file is missing, unparsable, or does not contain a mapping.

    Returns:
        dict: The loaded mapping (empty if the file is empty).
    """
    try:
        if filename == "-":
            data = yaml.safe_load(sys.stdin)
        else:
            with open(filename, encoding="UTF-8") as file:
                data = yaml.safe_load(file)
    except FileNotFoundError as ex:
        raise ConfigurationError(str(ex)) from ex
    except yaml.YAMLError as ex:
        raise ConfigurationError(f"Could not parse config file {filename}: {ex}") from ex
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {filename} must contain a mapping, got {type(data).__name__}")
    return data


def resolve_threads(threads=None) -> int:
    """Work out the worker thread count: explicit value, then the environment, then 1."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV)
        if raw in (None, ""):
            return 1
        try:
            threads = int(raw)
        except ValueError as ex:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from ex
    if threads < 1:
        raise ConfigurationError(f"thread count must be at least 1, got {threads}", field="threads")
    return threads


def chunk_slices(count: int, chunk_size: int = CHUNK_SIZE) -> List[slice]:
    """Split range(count) into consecutive slices of at most chunk_size items."""
    return [slice(start, min(start + chunk_size, count)) for start in range(0, count, chunk_size)]


def ordered_map(func: Callable[[T], object], items: Sequence[T], threads: int = 1) -> list:
    """Apply func to every item, possibly on a thread pool, returning results in input order.

    numpy releases the GIL inside its kernels, so threads give real speedups for
    the batched evaluations used here.
    """
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def point_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for the index-th point of a seeded computation.

    Streams are keyed by (seed, index), so results do not depend on how work is
    spread across threads.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def child_seeds(seed: int, count: int) -> List[int]:
    """Derive count independent integer seeds from one seed."""
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in np.random.SeedSequence(seed).spawn(count)]


def log_log_slope(xs, ys) -> float:
    """Least-squares slope of log(ys) against log(xs)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


def first_nonfinite_row(*arrays) -> int:
    """Index of the first row where any array holds a non-finite value, or -1."""
    bad = None
    for array in arrays:
        array = np.asarray(array)
        rows = ~np.isfinite(array.reshape(array.shape[0], -1)).all(axis=1)
        bad = rows if bad is None else (bad | rows)
    if bad is None or not bad.any():
        return -1
    return int(np.argmax(bad))


def derived_seed(*keys: int) -> int:
    """Deterministic integer seed from a tuple of integer keys."""
    return int(np.random.SeedSequence([int(key) for key in keys]).generate_state(1, dtype=np.uint64)[0])


def write_csv_table(path, columns: Sequence[str], rows):
    """Write rows (sequences matching columns) to a CSV file; floats use 10 significant digits, NaN is "n/a"."""
    with open(path, "w", newline="", encoding="UTF-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(value) for value in row])


def _csv_cell(value):
    if isinstance(value, float):
        return "n/a" if math.isnan(value) else format(value, ".10g")
    return value

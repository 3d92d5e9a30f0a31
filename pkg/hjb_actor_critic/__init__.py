"""Actor-critic solver for stationary Hamilton-Jacobi-Bellman equations with wide shallow networks."""

from importlib import metadata

try:
    __version__ = metadata.version("hjb-actor-critic")
except metadata.PackageNotFoundError:
    __version__ = "0.0.0"

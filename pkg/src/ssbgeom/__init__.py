"""Differential geometry of the solution space boundary of quadratic power flow maps."""

from . import curvature, invcalc, inversion, netio, projection, quadmap, ssb
from .quadmap import QuadraticMap, build

__version__ = "0.1.0"

__all__ = [
    "QuadraticMap",
    "build",
    "curvature",
    "invcalc",
    "inversion",
    "netio",
    "projection",
    "quadmap",
    "ssb",
    "__version__",
]

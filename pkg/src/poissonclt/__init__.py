"""Monte Carlo laboratory for quantitative central limit theorems of Poisson functionals.

Simulates marked Poisson point processes on Euclidean, toroidal and hyperbolic
domains, evaluates localizing score functionals (geometric-graph statistics,
birth-growth acceptance, Laguerre thinning), estimates the ingredients of
second-order Poincare bounds by Monte Carlo, and empirically verifies
Berry-Esseen rates across dilating windows.
"""

from poissonclt.rng import RandomStream
from poissonclt.geometry import Space, BoxWindow, BallWindow
from poissonclt.process import SpaceTimeDomain, Configuration, MarkedPoint

__all__ = [
    "RandomStream",
    "Space",
    "BoxWindow",
    "BallWindow",
    "SpaceTimeDomain",
    "Configuration",
    "MarkedPoint",
]

__version__ = "0.1.0"

"""Simulation and exact evaluation of multivariate max-stable processes.

Modules
-------
core         domain types, index conventions, shared utilities
rng          counter-based reproducible random streams
gaussian     covariance factorization, variograms, rectangle probabilities
kernels      Smith kernels and mixing densities
spectral     spectral samplers, tilted processes, mixture reconstruction
simulate     de Haan Poisson cascade
fidi         exponent functional: Monte Carlo, tilt decomposition, exact
equivalence  statistical checks of spectral, stationarity and zonoid identities
config, cli  TOML configuration and the ``maxstable`` command
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    SUP,
    EstimateWithError,
    LocationSet,
    ModelSpec,
    NormSpec,
    SampleBatch,
    SampleMatrix,
    ThresholdMatrix,
    shift_locations,
)
from .rng import rng_stream  # noqa: E402

__all__ = [
    "SUP",
    "EstimateWithError",
    "LocationSet",
    "ModelSpec",
    "NormSpec",
    "SampleBatch",
    "SampleMatrix",
    "ThresholdMatrix",
    "shift_locations",
    "rng_stream",
    "__version__",
]

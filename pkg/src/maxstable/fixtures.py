"""Reference models used by the tests, the acceptance suite and ``configs/``."""

import numpy as np

from .core import LocationSet, ModelSpec, SampleBatch
from .gaussian import FractionalVariogram, fbm_variogram, quadratic_time_variogram
from .kernels import GaussianDensityKernel, MixingDensity
from .rng import StreamBatch
from .spectral import BrownResnick, Custom, Sampler, Scaled, Scaler, Smith


def unit_frechet():
    """``Z == 1``: a Brown-Resnick model with zero variogram."""
    return ModelSpec(1.0, 1, 1, BrownResnick(FractionalVariogram(scale=0.0))), LocationSet([0.0])


def br_brownian(h=4.0):
    """Brownian variogram ``|t - s|`` at ``{0, h}`` (``gamma = h``)."""
    return ModelSpec(1.0, 1, 1, BrownResnick(FractionalVariogram(1.0, 1.0))), LocationSet([0.0, h])


def smith_gaussian(alpha=1.0, h=1.0):
    """Standard normal density kernel with standard normal mixing at ``{0, h}``."""
    return ModelSpec(alpha, 1, 1, Smith(GaussianDensityKernel(), MixingDensity())), LocationSet([0.0, h])


def br_bivariate_components(rho=0.5):
    """``d = 2``: correlated Brownian components (correlation ``rho``) at ``{1, 2}``."""
    v = fbm_variogram(0.0, 1.0, 1.0, corr=[[1.0, rho], [rho, 1.0]])
    return ModelSpec(1.0, 2, 1, BrownResnick(v)), LocationSet([1.0, 2.0])


def planted_nonstationary():
    """``Y(t) = t^2 N``; variogram ``(t^2 - s^2)^2``."""
    return ModelSpec(1.0, 1, 1, BrownResnick(quadratic_time_variogram(1.0))), LocationSet([0.0, 1.0])


def scaled(base, moment=1.0, kind="uniform"):
    return ModelSpec(base.alpha, base.d, base.p, Scaled(base, Scaler(kind, moment)))


class ConstantSampler(Sampler):
    """``Z == value`` at every location (a deterministic spectrum)."""

    def __init__(self, value=1.0, alpha=1.0, d=1, p=1):
        self.value = float(value)
        self.alpha = float(alpha)
        self.d = int(d)
        self.p = int(p)

    def sample(self, locs, streams):
        m = len(streams)
        return SampleBatch(np.full((m, self.d, locs.n), self.value), np.ones(m))


def constant_factory(alpha, d, p):
    """Factory used by the ``custom`` configuration example."""
    return ConstantSampler(1.0, alpha, d, p)


def custom_unit():
    return ModelSpec(1.0, 1, 1, Custom(ConstantSampler())), LocationSet([0.0])


def vector_samples(kind, value, n, seed, prob=0.5):
    """Samples of nonnegative vectors: ``constant`` rows equal to ``value``
    or ``bernoulli`` rows ``V * value`` with ``V ~ Bernoulli(prob)``."""
    value = np.asarray(value, dtype=float)
    if kind == "constant":
        return np.tile(value, (n, 1))
    if kind == "bernoulli":
        u = StreamBatch.for_replicates(seed, n).uniform()
        return (u < prob)[:, None] * value[None, :]
    raise ValueError(f"unknown vector sample kind {kind!r}")


def bernoulli_pair(n=100_000, seed=0):
    """``A = (1, 1)`` and ``B = V (2, 2)``: zonoid-equivalent, unequal in law."""
    return vector_samples("constant", [1, 1], n, seed), vector_samples("bernoulli", [2, 2], n, seed)


def perturbed_pair(n=100_000, seed=0):
    """``A = (1, 1)`` and ``B = (1, 2)``: not equivalent."""
    return vector_samples("constant", [1, 1], n, seed), vector_samples("constant", [1, 2], n, seed)

import numpy as np
import pytest
from scipy import integrate

from maxstable.core import SUP, NormSpec
from maxstable.kernels import BoxKernel, GaussianDensityKernel, MixingDensity, TriangleKernel, kernel_from_config
from maxstable.rng import StreamBatch


def _quad_mass(kernel, k, alpha, lo, hi):
    return integrate.quad(lambda t: kernel(np.array([t]))[k] ** alpha, lo, hi, limit=200, points=[0.0])[0]


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize(
    "kernel,lo,hi",
    [
        (GaussianDensityKernel([1.0, 2.0]), -40, 40),
        (TriangleKernel([1.0, 3.0], [2.0, 0.5]), -3, 3),
        (BoxKernel([1.0, 2.0], [1.5, 1.0]), 0, 2),
    ],
    ids=["gaussian", "triangle", "box"],
)
def test_component_masses_match_quadrature(kernel, lo, hi, alpha):
    for k in range(kernel.d):
        assert np.isclose(kernel.component_mass(k, alpha), _quad_mass(kernel, k, alpha, lo, hi), rtol=1e-7)


def test_gaussian_mass_at_alpha_one_is_one():
    assert np.isclose(GaussianDensityKernel([0.3], p=2).component_mass(0, 1.0), 1.0)


def test_norm_mass_numeric_against_quadrature():
    kern = GaussianDensityKernel([1.0, 2.0])
    val = kern.norm_mass(SUP, 1.0)
    ref = integrate.quad(lambda t: kern(np.array([t])).max(), -40, 40, limit=200)[0]
    assert np.isclose(val, ref, rtol=1e-8)
    assert kern.mass_errors


def test_norm_mass_l_alpha_is_sum_of_component_masses():
    kern = TriangleKernel([1.0, 2.0])
    assert np.isclose(kern.norm_mass(NormSpec("l_alpha", 2.0), 2.0), kern.component_mass(0, 2.0) + kern.component_mass(1, 2.0))


def test_box_norm_mass_exact():
    kern = BoxKernel([1.0, 2.0], [2.0, 1.0])
    assert np.isclose(kern.norm_mass(SUP, 1.0), 2.0 * 1.0 + 1.0 * 1.0)


def test_window_contains_mass():
    kern = GaussianDensityKernel([1.0])
    lo, hi = kern.window(1.0, eps=1e-12)
    inside = integrate.quad(lambda t: kern(np.array([t]))[0], lo, hi)[0]
    assert 1 - inside < 1e-11


def test_kernel_registry():
    assert isinstance(kernel_from_config({"name": "triangle", "widths": [1.0]}), TriangleKernel)
    with pytest.raises(ValueError, match="unknown kernel"):
        kernel_from_config({"name": "nope"})
    with pytest.raises(ValueError):
        GaussianDensityKernel([-1.0])


@pytest.mark.parametrize("kind", ["normal", "student-t"])
def test_mixing_density_sampling(kind):
    q = MixingDensity(kind, scale=2.0)
    w = q.sample(StreamBatch.for_replicates(0, 50_000))
    assert w.shape == (50_000, 1)
    assert abs(np.median(w)) < 0.05
    grid = np.linspace(-30, 30, 20001)[:, None]
    assert np.isclose(np.trapezoid(np.exp(q.logpdf(grid)), grid[:, 0]), 1.0, atol=1e-3)
    with pytest.raises(ValueError):
        MixingDensity("cauchy")

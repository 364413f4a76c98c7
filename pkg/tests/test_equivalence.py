import json

import numpy as np
import pytest

from maxstable import fixtures
from maxstable.core import EstimateWithError, LocationSet
from maxstable.equivalence import (
    FunctionalBattery,
    augmented_identifiability_test,
    bonferroni_z,
    check_shift_invariant_degree0,
    default_battery,
    default_directions,
    functional_equivalence_test,
    homogeneous_battery_test,
    merge_verdicts,
    rescaled_invariance_test,
    stationarity_test,
    symmetrize,
    zonoid_test,
)
from maxstable.spectral import mixture_sampler


def test_bonferroni_critical_values():
    assert np.isclose(bonferroni_z(1, 0.05), 1.959963984540054)
    assert bonferroni_z(10) > bonferroni_z(2) > bonferroni_z(1)


def test_battery_rejects_non_homogeneous_functionals():
    B = FunctionalBattery(1, 2)
    B.register("sum", lambda f: f.sum(axis=(1, 2)), 1)
    with pytest.raises(ValueError, match="not homogeneous"):
        B.register("shifted", lambda f: f.sum(axis=(1, 2)) + 1, 1)
    with pytest.raises(ValueError, match="degree 2"):
        B.register("sum-as-2", lambda f: f.sum(axis=(1, 2)), 2)
    assert len(B) == 1


@pytest.mark.parametrize("kind", ["alpha", "zero", "all"])
def test_default_battery_degrees(kind):
    B = default_battery(2, 3, 1.5, kind)
    degrees = {h.degree for h in B}
    assert degrees == {"alpha": {1.5}, "zero": {0.0}, "all": {0.0, 1.5}}[kind]
    assert len(B.restrict(0.0)) == sum(h.degree == 0 for h in B)


def test_degree_zero_values_are_clipped():
    B = default_battery(1, 2, 1.0, "zero", clip=10.0)
    vals = np.array([[[0.0, 1.0]], [[1.0, 2.0]]])
    out = B.evaluate(vals)
    v, clipped, _ = out["ratio[1/0]"]
    assert v.tolist() == [10.0, 2.0] and clipped == 0.5


def test_identical_streams_give_zero_scores():
    spec, locs = fixtures.smith_gaussian()
    v = functional_equivalence_test(spec, spec, locs=locs, n_rep=5000, seed=1, seed_b=1)
    assert v.consistent and v.max_abs_z == 0.0
    json.dumps(v.to_dict())


def test_scaled_spectra_equivalence():
    base, locs = fixtures.br_brownian()
    ok = functional_equivalence_test(base, fixtures.scaled(base, 1.0), locs=locs, n_rep=50_000, seed=2, z_crit=4)
    bad = functional_equivalence_test(base, fixtures.scaled(base, 1.2), locs=locs, n_rep=50_000, seed=2, z_crit=4)
    assert ok.consistent and not bad.consistent
    assert bad.level is None and bad.z_crit == 4


def test_mixture_reconstruction_is_equivalent():
    spec, locs = fixtures.smith_gaussian()
    mix = mixture_sampler(spec, [[0.0], [0.5], [1.0]], [0.3, 0.4, 0.3])
    assert functional_equivalence_test(spec, mix, locs=locs, n_rep=40_000, seed=3).consistent


def test_merge_verdicts_pools_comparisons():
    e = EstimateWithError(1.0, 0.1, 10)
    f = EstimateWithError(2.0, 0.1, 10)
    from maxstable.equivalence import _verdict

    v = merge_verdicts([_verdict({"a": (e, e)}), _verdict({"b": (e, f)})], prefixes=["x", "y"])
    assert set(v.z_scores) == {"x:a", "y:b"} and not v.consistent
    assert v.z_crit == bonferroni_z(2)


def test_stationarity_examples():
    smith, locs = fixtures.smith_gaussian()
    planted, plocs = fixtures.planted_nonstationary()
    ok = stationarity_test(smith, [[0.5]], locs, n_rep=20_000, seed=4)
    bad = stationarity_test(planted, [[0.5]], plocs, n_rep=20_000, seed=4)
    assert ok.consistent and not bad.consistent


def test_stationarity_requires_degree_zero_battery():
    spec, locs = fixtures.smith_gaussian()
    with pytest.raises(ValueError, match="degree-0"):
        stationarity_test(spec, [[1.0]], locs, battery=default_battery(1, 2, 1.0, "alpha"), n_rep=10)


def test_shift_invariance_gate():
    maxsum = lambda f: f.max(axis=(1, 2)) / f.sum(axis=(1, 2))  # noqa: E731
    first = lambda f: f[:, 0, 0] / f[:, 0, 1]  # noqa: E731
    assert check_shift_invariant_degree0(maxsum, 1, 4)
    assert not check_shift_invariant_degree0(first, 1, 4)
    assert not check_shift_invariant_degree0(lambda f: f.sum(axis=(1, 2)), 1, 4)
    assert check_shift_invariant_degree0(symmetrize(lambda f: f[:, 0, 0] / f.max(axis=(1, 2))), 1, 4)


def test_rescaled_spectrum_invariance():
    spec, _ = fixtures.br_brownian()
    window = np.arange(-20.0, 20.5, 0.5)
    locs = LocationSet([0.0, 1.0])
    maxsum = lambda f: f.max(axis=(1, 2)) / f.sum(axis=(1, 2))  # noqa: E731
    v = rescaled_invariance_test(spec, maxsum, window, locs, [[0.5]], n_rep=20_000, seed=5,
                                 thresholds=[[[1.0, 1.0]], [[0.5, 2.0]]])
    assert v.consistent
    na = rescaled_invariance_test(spec, lambda f: f[:, 0, 0] / f[:, 0, 1], window, locs, [[0.5]], n_rep=10)
    assert na.decision == "not-applicable" and na.notes


def test_default_directions():
    U = default_directions(3)
    assert U.shape[1] == 3 and np.any(U < 0)
    V = default_directions(3, "max-zonoid")
    assert np.all(V >= 0) and len(V) >= 3


def test_zonoid_examples():
    A, B = fixtures.bernoulli_pair(50_000, seed=1)
    A2, C = fixtures.perturbed_pair(50_000, seed=1)
    for mode in ("zonoid", "max-zonoid"):
        assert zonoid_test(A, B, mode=mode, z_crit=4).consistent
        assert not zonoid_test(A2, C, mode=mode, z_crit=4).consistent
    assert not augmented_identifiability_test(A, B, z_crit=4).consistent
    assert augmented_identifiability_test(A, A, z_crit=4).consistent
    assert homogeneous_battery_test(A, B, z_crit=4).consistent


def test_zonoid_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        zonoid_test([[-1.0, 1.0]], [[1.0, 1.0]])
    with pytest.raises(ValueError, match="dimension"):
        zonoid_test([[1.0, 1.0]], [[1.0, 1.0, 1.0]])
    with pytest.raises(ValueError, match="mode"):
        zonoid_test([[1.0]], [[1.0]], mode="bogus")
    with pytest.raises(ValueError, match="directions"):
        zonoid_test([[1.0, 1.0]], [[1.0, 1.0]], directions=[[1.0, 0.0]])


def test_roll_symmetrized_two_point_functional_is_detected():
    # invariance under periodic rolls of a 2-point window is weaker than
    # invariance under real shifts of the process; the test has the power to tell
    spec, _ = fixtures.br_brownian()
    F = symmetrize(lambda f: f[:, 0, 0] / f.max(axis=(1, 2)))
    v = rescaled_invariance_test(spec, F, [0.0, 1.0], [0.0, 1.0], [[1.0]], n_rep=50_000, seed=0)
    assert v.decision == "inconsistent"

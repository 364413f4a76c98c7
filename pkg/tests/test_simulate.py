import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import ndtr

from maxstable import fixtures
from maxstable.core import ModelSpec
from maxstable.gaussian import FractionalVariogram
from maxstable.spectral import BrownResnick, TiltAnchor, tilt_sampler
from maxstable.simulate import (
    CascadeConfig,
    TruncationError,
    check_max_stability,
    column_names,
    marginal_ks,
    read_replicates_binary,
    read_replicates_csv,
    simulate_maxstable,
    write_replicates_binary,
    write_replicates_csv,
)

GRID = np.exp(np.linspace(np.log(0.05), np.log(50), 400))


def test_unit_frechet_margins():
    spec, locs = fixtures.unit_frechet()
    res = simulate_maxstable(spec, locs, n_rep=100_000, seed=0)
    assert res.values.shape == (100_000, 1, 1)
    assert marginal_ks(res.values, 1.0, GRID) <= 0.01
    assert res.truncated_fraction == 0


def test_zero_variogram_gives_equal_entries():
    spec = ModelSpec(1.0, 1, 1, BrownResnick(FractionalVariogram(scale=0.0)))
    res = simulate_maxstable(spec, [0.0, 1.0, 5.0], n_rep=2000, seed=1)
    assert np.all(res.values == res.values[:, :, :1])


def test_bivariate_brown_resnick_joint_probability():
    spec, locs = fixtures.br_brownian(1.0)
    res = simulate_maxstable(spec, locs, n_rep=40_000, seed=2)
    p = np.mean(np.all(res.values <= 1.0, axis=(1, 2)))
    oracle = np.exp(-2 * ndtr(0.5))
    assert abs(p - oracle) < 4.5 * np.sqrt(oracle * (1 - oracle) / 40_000)


def test_simulated_replicates_are_max_stable():
    spec, locs = fixtures.smith_gaussian()
    res = simulate_maxstable(spec, locs, n_rep=40_000, seed=3)
    for c in (0.5, 2.0):
        rep = check_max_stability(res, c, [[1.0, 1.5]])
        assert abs(rep.z) < 4.5
    assert check_max_stability(res, 1.0, [[1.0, 1.5]]).z == 0.0
    with pytest.raises(ValueError):
        check_max_stability(res, 0.0, [[1.0, 1.0]])


def test_block_and_worker_invariance():
    spec, locs = fixtures.br_brownian(2.0)
    a = simulate_maxstable(spec, locs, n_rep=300, seed=4)
    b = simulate_maxstable(spec, locs, n_rep=300, seed=4, block_size=41, workers=3)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.n_atoms, b.n_atoms)


def test_raising_max_points_never_lowers_entries():
    spec, locs = fixtures.br_brownian(2.0)
    lo = simulate_maxstable(spec, locs, CascadeConfig(max_points=3), n_rep=500, seed=5)
    hi = simulate_maxstable(spec, locs, CascadeConfig(max_points=300), n_rep=500, seed=5)
    assert np.all(hi.values >= lo.values)
    assert lo.truncated.any()
    untouched = ~lo.truncated
    assert np.array_equal(hi.values[untouched], lo.values[untouched])


def test_report_truncation_raises():
    spec, locs = fixtures.br_brownian(2.0)
    with pytest.raises(TruncationError, match="max_points=1"):
        simulate_maxstable(spec, locs, CascadeConfig(max_points=1, report_truncation=True), n_rep=100, seed=0)


def test_cascade_config_validation():
    with pytest.raises(ValueError):
        CascadeConfig(max_points=0)
    with pytest.raises(ValueError):
        CascadeConfig(tail_guard=0.5)


def test_weighted_samplers_rejected():
    spec, locs = fixtures.br_bivariate_components()
    w = tilt_sampler(spec, TiltAnchor([1.0]), pilot_size=500)
    with pytest.raises(ValueError, match="unweighted"):
        simulate_maxstable(w, locs, n_rep=10)


def test_column_names_are_location_major():
    assert column_names(2, 2) == ["Z0_t0", "Z1_t0", "Z0_t1", "Z1_t1"]


values_strategy = st.tuples(st.integers(1, 5), st.integers(1, 3), st.integers(1, 4)).flatmap(
    lambda s: arrays(float, s, elements=st.floats(0, 1e300, allow_nan=False, allow_infinity=False))
)


@given(values_strategy)
def test_csv_roundtrip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "z.csv"
    write_replicates_csv(values, path)
    assert np.array_equal(read_replicates_csv(path, values.shape[1]), values)


@given(values_strategy)
def test_binary_roundtrip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("bin") / "z.bin"
    write_replicates_binary(values, path)
    assert np.array_equal(read_replicates_binary(path), values)


def test_binary_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"nonsense" + bytes(40))
    with pytest.raises(ValueError, match="magic"):
        read_replicates_binary(p)
    write_replicates_binary(np.ones((2, 1, 2)), p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError, match="truncated"):
        read_replicates_binary(p)


def test_marginal_ks_on_exact_quantiles():
    u = (np.arange(1, 10_001) - 0.5) / 10_000
    v = (-1 / np.log(u))[:, None, None]
    assert marginal_ks(v, 1.0, GRID) < 2e-4

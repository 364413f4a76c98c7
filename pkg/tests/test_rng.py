import numpy as np
import pytest

from maxstable.rng import ATOM_STRIDE, StreamBatch, derive_seed, rng_stream


def test_same_pair_same_sequence():
    a = rng_stream(7, 0).uniform(1000)
    b = rng_stream(7, 0).uniform(1000)
    assert np.array_equal(a, b)


def test_streams_uncorrelated():
    a = rng_stream(7, 0).uniform(10_000)
    b = rng_stream(7, 1).uniform(10_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


def test_seed_sensitivity():
    assert not np.array_equal(rng_stream(7, 0).uniform(100), rng_stream(8, 0).uniform(100))


def test_uniform_open_interval_and_moments():
    u = rng_stream(1, 3).uniform(200_000)
    assert u.min() > 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)
    assert abs(u.var() - 1 / 12) < 1e-3


def test_normal_and_exponential_moments():
    s = rng_stream(2, 0)
    z = s.normal(200_000)
    e = s.exponential(200_000)
    assert abs(z.mean()) < 0.01 and abs(z.var() - 1) < 0.01
    assert abs(e.mean() - 1) < 0.01


def test_batch_rows_match_single_streams():
    batch = StreamBatch.for_replicates(11, 5, 9)
    rows = batch.uniform(4)
    for r, k in enumerate(range(5, 9)):
        assert np.array_equal(rows[r], rng_stream(11, k).uniform(4))


def test_block_split_invariance():
    whole = StreamBatch.for_replicates(3, 0, 100).normal(6)
    parts = np.vstack([StreamBatch.for_replicates(3, a, a + 25).normal(6) for a in range(0, 100, 25)])
    assert np.array_equal(whole, parts)


def test_chunked_draws_equal_sequential_draws():
    a = StreamBatch.for_replicates(4, 10)
    b = StreamBatch.for_replicates(4, 10)
    joint = a.uniform(6)
    seq = np.hstack([b.uniform(2), b.uniform(4)])
    assert np.array_equal(joint, seq)


def test_lanes_are_distinct_and_keep_counters():
    b = StreamBatch.for_replicates(5, 4).at(3 * ATOM_STRIDE)
    lane = b.lane(1)
    assert np.array_equal(lane.counters, b.counters)
    assert not np.array_equal(lane.uniform(), b.lane(2).uniform())
    # the same lane at a different atom offset gives different numbers
    other = StreamBatch.for_replicates(5, 4).at(4 * ATOM_STRIDE).lane(1)
    assert not np.array_equal(b.lane(1).uniform(), other.uniform())


def test_subset_update_roundtrip():
    b = StreamBatch.for_replicates(9, 6)
    sub = b.subset(np.array([1, 4]))
    sub.uniform(3)
    b.update(np.array([1, 4]), sub)
    assert b.counters.tolist() == [0, 3, 0, 0, 3, 0]


def test_derive_seed_tags():
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert derive_seed(1, "a") != derive_seed(2, "a")


@pytest.mark.parametrize("size", [None, 3, (2, 3)])
def test_random_stream_shapes(size):
    out = rng_stream(0).uniform(size)
    assert np.shape(out) == (() if size is None else np.atleast_1d(size).tolist() and tuple(np.atleast_1d(size)))

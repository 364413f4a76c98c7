"""Counter-based random streams.

Every draw is a pure function of ``(seed, stream_id, lane, counter)``, so a
replicate's random numbers do not depend on how replicates are grouped into
blocks or spread over workers. Replicate ``k`` of a run always owns stream
``k``; independent purposes inside one replicate (Poisson arrivals, spectral
draws, mixture indices, ...) use distinct *lanes* of that stream.

The bit generator is a doubly-mixed SplitMix64 hash of a Weyl sequence. It is
not cryptographic; it is fast in vectorized numpy and passes the usual
uniformity and cross-stream correlation sanity checks (see tests).
"""

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LANE = np.uint64(0xD1B54A32D192ED03)
_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 2.0**-53

#: Counter stride reserved for one Poisson atom's spectral draw.
ATOM_STRIDE = 1 << 32


def _mix64(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _as_u64(x):
    return np.asarray(x, dtype=np.uint64)


def stream_keys(seed, stream_ids):
    """Keys for the given stream ids under ``seed``."""
    seed = _as_u64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    ids = np.atleast_1d(np.asarray(stream_ids)).astype(np.uint64)
    with np.errstate(over="ignore"):
        base = _mix64(seed ^ _SALT)
        return _mix64(_mix64(base + ids * _GOLDEN) ^ _SALT)


def derive_seed(seed, *tags):
    """Deterministically derive a child seed from ``seed`` and hashable tags.

    Tags may be ints or strings. Used to give each sub-computation of a run
    (pilot, estimator term, second sampler) its own family of streams.
    """
    h = _as_u64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        for tag in tags:
            if isinstance(tag, str):
                value = 1469598103934665603
                for byte in tag.encode():
                    value = ((value ^ byte) * 1099511628211) & 0xFFFFFFFFFFFFFFFF
            else:
                value = int(tag) & 0xFFFFFFFFFFFFFFFF
            h = _mix64(h + _mix64(_as_u64(value) + _GOLDEN))
    return int(h)


class StreamBatch:
    """A batch of independent streams, one per row.

    Each stream keeps its own counter, so a subset of streams can draw while
    the rest stay put (used by rejection samplers and the Poisson cascade).
    """

    def __init__(self, keys, counters=None):
        self.keys = _as_u64(keys).reshape(-1)
        if counters is None:
            counters = np.zeros(self.keys.shape, dtype=np.uint64)
        self.counters = np.broadcast_to(_as_u64(counters), self.keys.shape).copy()

    @classmethod
    def for_replicates(cls, seed, start, stop=None):
        """Streams ``start, ..., stop - 1`` of ``seed`` (replicate k owns id k)."""
        if stop is None:
            start, stop = 0, start
        return cls(stream_keys(seed, np.arange(start, stop, dtype=np.uint64)))

    def __len__(self):
        return self.keys.shape[0]

    def lane(self, j):
        """Sibling streams identified by lane ``j``, at the same counters.

        Keeping the counters means a lane taken from a batch positioned at a
        per-atom offset is itself distinct per atom.
        """
        with np.errstate(over="ignore"):
            keys = _mix64(self.keys ^ _mix64(_as_u64(j) * _LANE + _GOLDEN))
        return StreamBatch(keys, self.counters)

    def at(self, offsets):
        """Copy of the batch positioned at the given counter offsets."""
        return StreamBatch(self.keys, offsets)

    def subset(self, idx):
        """Copy of the selected streams (counters included)."""
        return StreamBatch(self.keys[idx], self.counters[idx])

    def update(self, idx, other):
        """Write back counters of a subset previously taken with ``subset``."""
        self.counters[idx] = other.counters

    def raw(self, k):
        """``k`` raw 64-bit words per stream, shape ``(m, k)``."""
        steps = np.arange(1, k + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            ctr = self.counters[:, None] + steps[None, :]
            out = _mix64(_mix64(self.keys[:, None] + ctr * _GOLDEN) ^ self.keys[:, None])
            self.counters += np.uint64(k)
        return out

    def uniform(self, k=None):
        """Uniforms on the open interval (0, 1); shape ``(m,)`` or ``(m, k)``."""
        n = 1 if k is None else k
        u = ((self.raw(n) >> _S11).astype(np.float64) + 0.5) * _TWO53
        return u[:, 0] if k is None else u

    def normal(self, k=None):
        return ndtri(self.uniform(k))

    def exponential(self, k=None):
        return -np.log(self.uniform(k))


class RandomStream:
    """A single reproducible stream with numpy-like draw methods."""

    def __init__(self, seed, stream_id=0, _batch=None):
        self.seed = seed
        self.stream_id = stream_id
        self.batch = _batch if _batch is not None else StreamBatch(stream_keys(seed, [stream_id]))

    def _draw(self, method, size):
        shape = () if size is None else tuple(np.atleast_1d(size))
        k = int(np.prod(shape)) if shape else 1
        out = getattr(self.batch, method)(k)[0]
        return out[0] if not shape else out.reshape(shape)

    def uniform(self, size=None):
        return self._draw("uniform", size)

    def normal(self, size=None):
        return self._draw("normal", size)

    def exponential(self, size=None):
        return self._draw("exponential", size)

    def lane(self, j):
        return RandomStream(self.seed, self.stream_id, _batch=self.batch.lane(j))


def rng_stream(seed, stream_id=0):
    """Return the stream identified by ``(seed, stream_id)``.

    Two calls with the same pair produce identical sequences.
    """
    return RandomStream(seed, stream_id)

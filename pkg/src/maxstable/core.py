"""Domain types and shared utilities.

Index conventions
-----------------
A joint spectral draw at ``n`` locations has ``d`` components. In memory a
single draw is a ``(d, n)`` array ``Z[i, j] = Z_i(t_j)``; a batch of ``m``
draws is ``(m, d, n)``. Thresholds use the same ``(d, n)`` layout.

Whenever a draw is flattened (CSV columns, binary dumps, Gaussian vectors) it
is *location-major*: location ``j`` occupies the block ``j*d .. j*d + d - 1``,
so flat index ``j*d + i`` holds component ``i`` at location ``j``. Use
:func:`flat_index` and :func:`unflatten` rather than re-deriving this.

Lexicographic order on pairs ``(i, j)`` means component first, then location,
which is C-order on the ``(d, n)`` layout.
"""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np


def flat_index(i, j, d):
    """Flat location-major position of component ``i`` at location ``j``."""
    return j * d + i


def flatten(values):
    """``(..., d, n)`` -> ``(..., n*d)`` location-major."""
    values = np.asarray(values)
    return np.swapaxes(values, -1, -2).reshape(values.shape[:-2] + (-1,))


def unflatten(flat, d):
    """Inverse of :func:`flatten`."""
    flat = np.asarray(flat)
    n = flat.shape[-1] // d
    return np.swapaxes(flat.reshape(flat.shape[:-1] + (n, d)), -1, -2)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LocationSet:
    """Ordered points ``t_1, ..., t_n`` in R^p."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("a LocationSet needs at least one point of dimension >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("location coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def p(self):
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return isinstance(other, LocationSet) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self):
        return f"LocationSet({self.points.tolist()})"

    def duplicates(self):
        """Pairs ``(a, b)``, ``a < b``, of coincident points."""
        out = []
        for a in range(self.n):
            for b in range(a + 1, self.n):
                if np.array_equal(self.points[a], self.points[b]):
                    out.append((a, b))
        return out

    def concat(self, other):
        other = as_locations(other, self.p)
        return LocationSet(np.vstack([self.points, other.points]))

    def index_of(self, point):
        """Index of the first point equal to ``point``, or None."""
        point = np.asarray(point, dtype=float).reshape(-1)
        hits = np.flatnonzero(np.all(self.points == point, axis=1))
        return int(hits[0]) if hits.size else None


def as_locations(obj, p=None):
    """Coerce a LocationSet, a sequence of points or scalars."""
    locs = obj if isinstance(obj, LocationSet) else LocationSet(obj)
    if p is not None and locs.p != p:
        raise ValueError(f"locations have dimension {locs.p}, expected {p}")
    return locs


def shift_locations(locs, h):
    """Apply the shift ``B^h``: returns ``{t_1 - h, ..., t_n - h}``.

    Evaluating a sampler at shifted locations realizes ``B^h Z``.
    """
    locs = as_locations(locs)
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.shape[0] != locs.p:
        raise ValueError(f"shift has dimension {h.shape[0]}, locations have {locs.p}")
    return LocationSet(locs.points - h)


@dataclass(frozen=True, eq=False)
class ThresholdMatrix:
    """Levels ``x_ij`` in (0, inf], shape ``(d, n)``.

    ``inf`` removes the pair ``(i, j)`` from every max, event and sum.
    """

    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise ValueError("thresholds must be a (d, n) matrix")
        if np.any(np.isnan(x)) or np.any(x <= 0):
            raise ValueError("thresholds must be strictly positive (inf allowed)")
        if not np.any(np.isfinite(x)):
            raise ValueError("at least one threshold must be finite")
        object.__setattr__(self, "x", _frozen(x))

    @property
    def d(self):
        return self.x.shape[0]

    @property
    def n(self):
        return self.x.shape[1]

    @property
    def finite(self):
        return np.isfinite(self.x)

    def pairs(self):
        """Finite pairs ``(i, j)`` in lexicographic order."""
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.finite))]

    def scaled(self, c):
        return ThresholdMatrix(self.x * c)

    def check(self, d, n):
        if self.x.shape != (d, n):
            raise ValueError(f"thresholds have shape {self.x.shape}, expected {(d, n)}")
        return self


def as_thresholds(obj, d=None, n=None):
    th = obj if isinstance(obj, ThresholdMatrix) else ThresholdMatrix(obj)
    if d is not None:
        th.check(d, n)
    return th


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """One joint draw ``Z_i(t_j)`` with its importance weight."""

    values: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError("sample values must be a finite nonnegative (d, n) matrix")
        if not self.weight >= 0:
            raise ValueError("weight must be nonnegative")
        object.__setattr__(self, "values", _frozen(v))


@dataclass
class SampleBatch:
    """``m`` joint draws: ``values`` is ``(m, d, n)``, ``weights`` is ``(m,)``."""

    values: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, r):
        return SampleMatrix(self.values[r], float(self.weights[r]))

    @property
    def weighted(self):
        return not np.all(self.weights == 1.0)

    @staticmethod
    def concat(batches):
        return SampleBatch(
            np.concatenate([b.values for b in batches]),
            np.concatenate([b.weights for b in batches]),
        )


@dataclass(frozen=True)
class EstimateWithError:
    """A Monte Carlo value with its standard error.

    ``self_normalized`` flags a delta-method standard error from a weighted
    ratio estimator. ``budget_hit`` flags an adaptive estimator that stopped
    on its sample budget rather than its accuracy target.
    """

    value: float
    stderr: float
    n_replicates: int
    self_normalized: bool = False
    budget_hit: bool = False

    def z_against(self, other):
        return z_score(self.value, self.stderr, other.value, other.stderr)

    def to_dict(self):
        return {
            "value": self.value,
            "stderr": self.stderr,
            "n_replicates": self.n_replicates,
            "self_normalized": self.self_normalized,
            "budget_hit": self.budget_hit,
        }


def z_score(a, se_a, b, se_b):
    """``(a - b) / sqrt(se_a^2 + se_b^2)`` with 0/0 read as 0."""
    diff = a - b
    se = np.hypot(se_a, se_b)
    if se == 0:
        return 0.0 if diff == 0 else float(np.copysign(np.inf, diff))
    return float(diff / se)


def mean_with_error(values, weights=None):
    """Plain or self-normalized mean of per-replicate values."""
    values = np.asarray(values, dtype=float)
    m = values.shape[0]
    if weights is None or np.all(weights == 1.0):
        sd = values.std(ddof=1) if m > 1 else 0.0
        return EstimateWithError(float(values.mean()), float(sd / np.sqrt(m)), m)
    w = np.asarray(weights, dtype=float)
    sw = w.sum()
    if sw <= 0:
        raise ValueError("all importance weights are zero")
    mu = float(np.dot(w, values) / sw)
    se = float(np.sqrt(np.sum(w**2 * (values - mu) ** 2)) / sw)
    return EstimateWithError(mu, se, m, self_normalized=True)


@dataclass(frozen=True)
class NormSpec:
    """A norm on R^d: ``sup``, ``l_alpha`` (with ``order``), ``l1`` or ``custom``."""

    kind: str = "sup"
    order: float = 1.0
    fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("sup", "l_alpha", "l1", "custom"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "l_alpha" and not self.order >= 1:
            raise ValueError("l_alpha is a norm only for order >= 1")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom norm needs fn")

    def __call__(self, x, axis=-1):
        x = np.abs(np.asarray(x, dtype=float))
        if self.kind == "sup":
            return x.max(axis=axis)
        if self.kind == "l1":
            return x.sum(axis=axis)
        if self.kind == "l_alpha":
            return np.sum(x**self.order, axis=axis) ** (1.0 / self.order)
        return np.apply_along_axis(self.fn, axis, x)

    def power(self, x, alpha, axis=-1):
        """``||x||^alpha``; exact sums for ``l_alpha`` of matching order."""
        if self.kind == "l_alpha" and self.order == alpha:
            return np.sum(np.abs(np.asarray(x, dtype=float)) ** alpha, axis=axis)
        return self(x, axis=axis) ** alpha


SUP = NormSpec("sup")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model: homogeneity index, component count and model kind.

    ``kind`` is one of the kind objects from :mod:`maxstable.spectral`
    (``BrownResnick``, ``Smith``, ``Scaled``, ``Custom``).
    """

    alpha: float
    d: int
    p: int
    kind: Any

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.d < 1 or self.p < 1:
            raise ValueError("d and p must be >= 1")
        validate = getattr(self.kind, "validate", None)
        if validate is not None:
            validate(self)

    @property
    def kind_name(self):
        return getattr(self.kind, "name", type(self.kind).__name__)


def map_blocks(fn, n_rep, block_size=65536, workers=1):
    """Apply ``fn(start, stop)`` over replicate blocks; results in block order.

    Because replicate k always owns stream k, the concatenated result does not
    depend on ``block_size`` or ``workers``.
    """
    bounds = [(s, min(s + block_size, n_rep)) for s in range(0, n_rep, block_size)]
    if workers <= 1 or len(bounds) == 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


def fixed_order_matvec(g, L):
    """``g @ L.T`` for ``g`` of shape ``(m, k)``, accumulated column by column.

    BLAS may change summation order with the batch size; this keeps each row's
    result independent of how many rows are processed together.
    """
    m, k = g.shape
    out = np.zeros((m, L.shape[0]))
    for c in range(k):
        col = L[:, c]
        if np.any(col):
            out += g[:, c, None] * col[None, :]
    return out


# -- CSV parsing -----------------------------------------------------------


def _read_rows(source):
    text = source.read() if hasattr(source, "read") else open(source, newline="").read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ValueError("CSV needs a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    body = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(r)}")
        try:
            body.append([float(c) for c in r])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return header, np.array(body)


def read_locations_csv(source):
    """One row per location, one column per coordinate."""
    _, body = _read_rows(source)
    return LocationSet(body)


def read_thresholds_csv(source):
    """One row per component, one column per location; ``inf`` allowed."""
    _, body = _read_rows(source)
    return ThresholdMatrix(body)


def write_locations_csv(locs, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{r}" for r in range(locs.p)])
        for pt in locs.points:
            w.writerow([repr(float(v)) for v in pt])

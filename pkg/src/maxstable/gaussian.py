"""Gaussian linear algebra for the log-Gaussian and Gaussian-kernel models.

Covers covariance factorization with a reported jitter ladder, joint sampling,
variogram definitions, the increment covariance used by tilted
Brown-Resnick laws, and rectangle probabilities of multivariate normals by
randomized lattice QMC with sequential conditioning (Genz's separation of
variables with Genz-Bretz variable reordering).

The univariate normal CDF and quantile are ``scipy.special.ndtr`` and
``ndtri``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .core import EstimateWithError, fixed_order_matvec
from .rng import StreamBatch, rng_stream

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
MAX_RECT_DIM = 64


class CovarianceError(ValueError):
    """A covariance matrix is not symmetric PSD or cannot be factorized."""


@dataclass(frozen=True)
class Factor:
    """Lower factor ``L`` with ``L @ L.T == C + jitter * I`` on the free block.

    Coordinates with exactly zero variance are held at zero and excluded from
    the jitter; ``degenerate`` lists them.
    """

    L: np.ndarray
    jitter: float
    degenerate: tuple = ()


def check_psd(C, rtol_sym=1e-12, rtol_eig=1e-10):
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise CovarianceError("covariance must be square")
    if not np.all(np.isfinite(C)):
        raise CovarianceError("covariance has non-finite entries")
    scale = np.abs(C).max() if C.size else 0.0
    if scale == 0:
        return C
    if np.abs(C - C.T).max() > rtol_sym * scale:
        raise CovarianceError("covariance is not symmetric")
    eig = np.linalg.eigvalsh((C + C.T) / 2)
    if eig[0] < -rtol_eig * np.abs(eig).max():
        raise CovarianceError(f"covariance is not PSD (min eigenvalue {eig[0]:.3g})")
    return C


def factorize(C):
    """Cholesky factor with the smallest successful jitter from the ladder.

    Jitters are ``{0, 1e-12, 1e-10, 1e-8} * trace(C) / m``.
    """
    C = check_psd(C)
    C = (C + C.T) / 2
    m = C.shape[0]
    diag = np.diag(C)
    zero = diag == 0
    if np.any(zero) and np.any(C[zero]):
        raise CovarianceError("zero-variance coordinate with nonzero covariance")
    free = np.flatnonzero(~zero)
    L = np.zeros((m, m))
    if free.size == 0:
        return Factor(L, 0.0, tuple(range(m)))
    sub = C[np.ix_(free, free)]
    base = np.trace(sub) / free.size
    for rung in JITTER_LADDER:
        eps = rung * base
        try:
            Ls = np.linalg.cholesky(sub + eps * np.eye(free.size))
        except np.linalg.LinAlgError:
            continue
        L[np.ix_(free, free)] = Ls
        return Factor(L, float(eps), tuple(int(i) for i in np.flatnonzero(zero)))
    raise CovarianceError("factorization failed at every jitter level")


def mvn_sample(mean, C, stream, factor=None):
    """``mean + L g`` with ``g`` standard normal from ``stream``.

    ``stream`` may be a :class:`~maxstable.rng.RandomStream` (returns one
    vector) or a :class:`~maxstable.rng.StreamBatch` (returns one row per
    stream).
    """
    mean = np.asarray(mean, dtype=float)
    L = (factor or factorize(C)).L
    if isinstance(stream, StreamBatch):
        return mean[None, :] + fixed_order_matvec(stream.normal(mean.size), L)
    g = stream.normal(mean.size)
    return mean + fixed_order_matvec(g[None, :], L)[0]


# -- variograms ------------------------------------------------------------


def _dist(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    return np.sqrt(np.sum((t - s) ** 2, axis=-1))


class Variogram:
    """``gamma_ij(t, s) = Var(Y_i(t) - Y_j(s))`` for a vector Gaussian field.

    Subclasses implement the vectorized :meth:`gamma`. Those backed by an
    explicit covariance function also implement :meth:`cov`.
    """

    d = 1
    stationary = False
    has_covariance = False

    def gamma(self, i, j, t, s):
        raise NotImplementedError

    def gamma_matrix(self, comps_a, pts_a, comps_b, pts_b):
        ca = np.asarray(comps_a)[:, None]
        cb = np.asarray(comps_b)[None, :]
        ta = np.asarray(pts_a, dtype=float)[:, None, :]
        tb = np.asarray(pts_b, dtype=float)[None, :, :]
        return np.broadcast_to(self.gamma(ca, cb, ta, tb), (ca.shape[0], cb.shape[1])).copy()

    def to_config(self):
        raise NotImplementedError


class FractionalVariogram(Variogram):
    """``scale * |t - s|^nu + Var(U_i - U_j)``.

    Realized by a common fractional Brownian field plus a time-constant
    Gaussian vector ``U`` with covariance ``component_cov`` (zeros by default,
    i.e. identical components).
    """

    stationary = True

    def __init__(self, scale=1.0, nu=1.0, d=1, component_cov=None):
        if not 0 < nu <= 2:
            raise ValueError("nu must lie in (0, 2]")
        if scale < 0:
            raise ValueError("scale must be nonnegative")
        self.scale = float(scale)
        self.nu = float(nu)
        self.d = int(d)
        S = np.zeros((self.d, self.d)) if component_cov is None else np.asarray(component_cov, float)
        if S.shape != (self.d, self.d):
            raise ValueError("component_cov must be d x d")
        check_psd(S)
        self.component_cov = S
        v = np.diag(S)
        self._offset = v[:, None] + v[None, :] - 2 * S

    def gamma(self, i, j, t, s):
        return self.scale * _dist(t, s) ** self.nu + self._offset[i, j]

    def to_config(self):
        return {
            "kind": "fractional",
            "scale": self.scale,
            "nu": self.nu,
            "component_cov": self.component_cov.tolist(),
        }


class CovarianceVariogram(Variogram):
    """Variogram induced by a covariance function ``cov(i, j, t, s)``."""

    has_covariance = True

    def __init__(self, cov_fn, d=1, stationary=False, config=None):
        self.cov_fn = cov_fn
        self.d = int(d)
        self.stationary = stationary
        self._config = config

    def cov(self, i, j, t, s):
        return self.cov_fn(i, j, t, s)

    def cov_matrix(self, comps, pts):
        c = np.asarray(comps)
        P = np.asarray(pts, dtype=float)
        out = self.cov(c[:, None], c[None, :], P[:, None, :], P[None, :, :])
        return np.broadcast_to(out, (c.size, c.size)).astype(float)

    def gamma(self, i, j, t, s):
        ti = self.cov(i, i, t, t)
        sj = self.cov(j, j, s, s)
        return ti + sj - 2 * self.cov(i, j, t, s)

    def to_config(self):
        if self._config is None:
            raise ValueError("this covariance variogram has no config form")
        return dict(self._config)


def fbm_variogram(root=0.0, scale=1.0, nu=1.0, corr=None):
    """Fractional Brownian field pinned at ``root``; variogram ``scale |t-s|^nu``.

    With a ``d x d`` correlation matrix ``corr`` the components are
    correlated copies: ``cov(Y_i(t), Y_j(s)) = corr_ij * cov_fbm(t, s)``.
    Cross-variograms then depend on ``t`` and ``s`` separately unless all
    correlations are 1.
    """
    r = np.atleast_1d(np.asarray(root, dtype=float))
    R = np.ones((1, 1)) if corr is None else np.asarray(corr, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or not np.allclose(np.diag(R), 1.0):
        raise ValueError("corr must be a square matrix with unit diagonal")
    check_psd(R)

    def cov(i, j, t, s):
        t = np.asarray(t, float)
        s = np.asarray(s, float)
        base = scale / 2 * (_dist(t, r) ** nu + _dist(s, r) ** nu - _dist(t, s) ** nu)
        return R[i, j] * base

    cfg = {"kind": "fbm", "root": r.tolist(), "scale": scale, "nu": nu}
    if corr is not None:
        cfg["corr"] = R.tolist()
    return CovarianceVariogram(cov, d=R.shape[0], stationary=bool(np.all(R == 1.0)), config=cfg)


def quadratic_time_variogram(scale=1.0):
    """``Y(t) = scale * |t|^2 * N``; variogram ``scale^2 (|t|^2 - |s|^2)^2``.

    Not a function of ``t - s``: the planted nonstationary fixture.
    """

    def cov(i, j, t, s):
        t = np.asarray(t, float)
        s = np.asarray(s, float)
        return scale**2 * np.sum(t**2, axis=-1) * np.sum(s**2, axis=-1)

    return CovarianceVariogram(cov, d=1, stationary=False, config={"kind": "quadratic-time", "scale": scale})


def variogram_from_config(cfg, d=1):
    kind = cfg.get("kind", "fractional")
    if kind == "fractional":
        return FractionalVariogram(
            cfg.get("scale", 1.0), cfg.get("nu", 1.0), d, cfg.get("component_cov")
        )
    if kind == "fbm":
        v = fbm_variogram(cfg.get("root", 0.0), cfg.get("scale", 1.0), cfg.get("nu", 1.0), cfg.get("corr"))
        if v.d != d:
            raise ValueError(f"variogram corr has d={v.d}, model has d={d}")
        return v
    if kind == "quadratic-time":
        return quadratic_time_variogram(cfg.get("scale", 1.0))
    raise ValueError(f"unknown variogram kind {kind!r}")


def build_increment_cov(v, anchor, targets):
    """Gaussian law of ``Y_i(t) - Y_k(h) - gamma_ik(t, h) / 2`` over targets.

    Parameters
    ----------
    v : Variogram
    anchor : (k, h)
        Anchor component and location.
    targets : (comps, points)
        Component indices ``(m,)`` and locations ``(m, p)``.

    Returns
    -------
    mean, cov : ndarray
        ``mean = -gamma_ik(t, h) / 2`` and ``cov_ab = [gamma_{i_a k}(t_a, h)
        + gamma_{i_b k}(t_b, h) - gamma_{i_a i_b}(t_a, t_b)] / 2``.
    """
    k, h = anchor
    comps, pts = targets
    comps = np.asarray(comps, dtype=int).reshape(-1)
    pts = np.asarray(pts, dtype=float).reshape(comps.size, -1)
    if comps.size == 0:
        raise ValueError("targets must be nonempty")
    h = np.asarray(h, dtype=float).reshape(1, -1)
    g_anchor = v.gamma_matrix(comps, pts, np.array([k]), h)[:, 0]
    G = v.gamma_matrix(comps, pts, comps, pts)
    P = (g_anchor[:, None] + g_anchor[None, :] - G) / 2
    P = (P + P.T) / 2
    at_anchor = (comps == k) & np.all(pts == h, axis=1)
    P[at_anchor, :] = 0.0
    P[:, at_anchor] = 0.0
    mean = -g_anchor / 2
    mean[at_anchor] = 0.0
    try:
        check_psd(P)
    except CovarianceError as exc:
        raise CovarianceError(f"invalid variogram on this evaluation set: {exc}") from None
    return mean, P


def log_gaussian_law(v, comps, pts):
    """Mean and covariance of ``log Z`` for ``Z = exp(Y - Var(Y)/2)``.

    Uses the variogram's covariance realization when it has one; otherwise
    roots the field at the first target (``Y_{c_0}(t_0) := 0``).
    """
    comps = np.asarray(comps, dtype=int)
    pts = np.asarray(pts, dtype=float)
    if v.has_covariance:
        C = v.cov_matrix(comps, pts)
        C = (C + C.T) / 2
        return -np.diag(C) / 2, C
    return build_increment_cov(v, (comps[0], pts[0]), (comps, pts))


# -- rectangle probabilities --------------------------------------------------


def _primes(k):
    out, c = [], 2
    while len(out) < k:
        if all(c % q for q in out if q * q <= c):
            out.append(c)
        c += 1
    return np.array(out, dtype=float)


def _genz_bretz_order(a, b, C):
    """Variable order and Cholesky factor of ``C`` reordered (Genz-Bretz)."""
    m = C.shape[0]
    C = C.copy()
    a = a.copy()
    b = b.copy()
    order = np.arange(m)
    L = np.zeros((m, m))
    y = np.zeros(m)
    tiny = 1e-300
    for i in range(m):
        rest = np.arange(i, m)
        s = L[rest, :i] @ y[:i]
        var = np.maximum(np.diag(C)[rest] - np.sum(L[rest, :i] ** 2, axis=1), tiny)
        sd = np.sqrt(var)
        lo = ndtr((a[rest] - s) / sd)
        hi = ndtr((b[rest] - s) / sd)
        j = rest[int(np.argmin(hi - lo))]
        for arr in (a, b, order, y):
            arr[[i, j]] = arr[[j, i]]
        C[[i, j], :] = C[[j, i], :]
        C[:, [i, j]] = C[:, [j, i]]
        L[[i, j], :] = L[[j, i], :]
        piv = np.sqrt(max(C[i, i] - np.sum(L[i, :i] ** 2), tiny))
        L[i, i] = piv
        below = np.arange(i + 1, m)
        L[below, i] = (C[below, i] - L[below, :i] @ L[i, :i]) / piv
        s_i = L[i, :i] @ y[:i]
        lo_i = (a[i] - s_i) / piv
        hi_i = (b[i] - s_i) / piv
        p_i = ndtr(hi_i) - ndtr(lo_i)
        # conditional mean of the truncated standard normal
        if p_i > 1e-300:
            y[i] = (np.exp(-0.5 * np.minimum(lo_i**2, 1e300)) - np.exp(-0.5 * np.minimum(hi_i**2, 1e300))) / (
                np.sqrt(2 * np.pi) * p_i
            )
        else:
            y[i] = hi_i if np.isfinite(hi_i) else lo_i
    return order, a, b, L


def _sov_integrand(w, a, b, L):
    """Genz's separation-of-variables integrand at points ``w`` of [0,1)^(m-1)."""
    m = L.shape[0]
    N = w.shape[0]
    y = np.zeros((N, m))
    lo = np.full(N, ndtr(a[0] / L[0, 0]))
    hi = np.full(N, ndtr(b[0] / L[0, 0]))
    f = hi - lo
    for i in range(1, m):
        u = lo + w[:, i - 1] * (hi - lo)
        y[:, i - 1] = ndtri(np.clip(u, 1e-300, 1 - 1e-16))
        s = y[:, :i] @ L[i, :i]
        lo = ndtr((a[i] - s) / L[i, i])
        hi = ndtr((b[i] - s) / L[i, i])
        f = f * (hi - lo)
    return f


def mvn_rect_prob(
    lower,
    upper,
    mean,
    C,
    target_rel_err=1e-4,
    stream=None,
    n_shifts=16,
    n_start=1024,
    max_points=1 << 21,
):
    """``P(lower <= X <= upper)`` for ``X ~ N(mean, C)`` by randomized QMC.

    A rank-1 lattice (Richtmyer generator, baker-transformed) is evaluated
    under ``n_shifts`` independent random shifts drawn from ``stream``; the
    standard error is the spread across shifts. The lattice size doubles
    until ``stderr <= target_rel_err * value`` or the total point count would
    exceed ``max_points``, in which case ``budget_hit`` is set.

    Coordinates with zero variance are resolved exactly. One remaining
    coordinate is integrated in closed form.
    """
    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    mean = np.asarray(mean, dtype=float).reshape(-1)
    C = check_psd(C)
    m = mean.size
    if lower.size != m or upper.size != m or C.shape != (m, m):
        raise ValueError("dimension mismatch between limits, mean and covariance")
    if np.any(lower > upper):
        raise ValueError("lower must not exceed upper")
    if m > MAX_RECT_DIM:
        raise ValueError(f"rectangle dimension {m} exceeds the supported ceiling {MAX_RECT_DIM}")
    if np.any(lower == upper):
        return EstimateWithError(0.0, 0.0, 0)
    a = lower - mean
    b = upper - mean
    diag = np.diag(C)
    det = diag <= 1e-14 * max(diag.max(initial=0.0), 1e-300)
    if np.any(det):
        if np.any(np.abs(C[det]) > 1e-12 * max(np.abs(C).max(), 1e-300)):
            raise CovarianceError("zero-variance coordinate with nonzero covariance")
        if np.any(a[det] > 0) or np.any(b[det] < 0):
            return EstimateWithError(0.0, 0.0, 0)
        keep = ~det
        a, b, C = a[keep], b[keep], C[np.ix_(keep, keep)]
    m = a.size
    if m == 0:
        return EstimateWithError(1.0, 0.0, 0)
    if m == 1:
        sd = np.sqrt(C[0, 0])
        return EstimateWithError(float(ndtr(b[0] / sd) - ndtr(a[0] / sd)), 0.0, 0)

    fac = factorize(C)
    Cj = C + fac.jitter * np.eye(m)
    _, a, b, L = _genz_bretz_order(a, b, Cj)

    if stream is None:
        stream = rng_stream(0, 0)
    shifts = stream.uniform((n_shifts, m - 1))
    z = np.sqrt(_primes(m - 1)) % 1.0
    N = n_start
    while True:
        k = np.arange(1, N + 1, dtype=float)[:, None]
        means = np.empty(n_shifts)
        for r in range(n_shifts):
            w = (k * z[None, :] + shifts[r][None, :]) % 1.0
            w = 1.0 - np.abs(2.0 * w - 1.0)
            means[r] = _sov_integrand(w, a, b, L).mean()
        value = float(means.mean())
        stderr = float(means.std(ddof=1) / np.sqrt(n_shifts))
        total = N * n_shifts
        if stderr <= target_rel_err * abs(value) or value == 0.0:
            return EstimateWithError(value, stderr, total)
        if 2 * total > max_points:
            return EstimateWithError(value, stderr, total, budget_hit=True)
        N *= 2

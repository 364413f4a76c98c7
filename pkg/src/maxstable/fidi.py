"""Finite-dimensional distributions via the exponent functional.

    -ln P(X_i(t_j) <= x_ij for all i, j) = E max_{i,j} Z_i(t_j)^alpha / x_ij^alpha

Evaluators
----------
exponent_mc
    Plain (or self-normalized) Monte Carlo of the right-hand side.
exponent_by_tilts
    Decomposition by the lexicographic infargmax:
    ``sum_{(k,l)} E Z_k^alpha(t_l) / x_kl^alpha * P(infargmax_{i,j}
    Theta^[t_l,k]_i(t_j) / x_ij = (k, l))``.
br_fidi_exact
    Brown-Resnick: each infargmax probability is a Gaussian rectangle
    probability of the log-increments, computed by randomized QMC.
smith_fidi
    Smith: norm form (one tilt per location) or component form (one tilt per
    pair), each by sampling the tilted kernel offset.
smith_gaussian_exact
    Smith with a Gaussian-density kernel: the infargmax events are linear in a
    Gaussian offset, so each term is a Gaussian rectangle probability.

Pairs with ``x_ij = inf`` are dropped from every max, event and sum.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import gaussian
from .core import (
    SUP,
    EstimateWithError,
    LocationSet,
    ModelSpec,
    as_locations,
    as_thresholds,
    map_blocks,
    mean_with_error,
)
from .kernels import GaussianDensityKernel
from .rng import StreamBatch, derive_seed, rng_stream
from .spectral import (
    BrownResnick,
    Custom,
    Scaled,
    Smith,
    SmithTilt,
    TiltAnchor,
    build_sampler,
    tilt_family,
)


class SingularModelError(ValueError):
    """The joint Gaussian law is singular; the exact route is undefined."""


class ExactUnavailableError(ValueError):
    """No exact evaluator exists for this model kind."""


def _combine(terms, n_rep, self_normalized=False, budget_hit=False):
    value = float(sum(t[0] for t in terms))
    se = float(np.sqrt(sum(t[1] ** 2 for t in terms)))
    return EstimateWithError(value, se, n_rep, self_normalized, budget_hit)


def _masked_ratio(values, x):
    """``Z / x`` with infinite thresholds mapped to -1 (never the max)."""
    fin = np.isfinite(x)
    return np.where(fin[None], values / np.where(fin, x, 1.0)[None], -1.0)


def _first_argmax(r):
    """Lexicographic (C-order) infargmax over the trailing ``(d, n)`` axes."""
    m = r.shape[0]
    return np.argmax(r.reshape(m, -1), axis=1)


# -- Monte Carlo ----------------------------------------------------------------


def exponent_mc(sampler, locs, thresholds, n_rep=100_000, seed=0, block_size=65536, workers=1, decompose=False):
    """``E max_{i,j} Z_i^alpha(t_j) / x_ij^alpha`` by Monte Carlo.

    Parameters
    ----------
    sampler : sampler or ModelSpec
    decompose : bool
        Also return each pair's share
        ``E[max(...) * 1{infargmax = (k, l)}]`` as a dict.

    Returns
    -------
    EstimateWithError, or ``(estimate, shares)`` when ``decompose``.
    """
    if isinstance(sampler, ModelSpec):
        sampler = build_sampler(sampler)
    locs = as_locations(locs)
    th = as_thresholds(thresholds, sampler.d, locs.n)
    alpha = float(sampler.alpha)
    x = th.x

    def block(a, b):
        batch = sampler.sample(locs, StreamBatch.for_replicates(seed, a, b))
        r = _masked_ratio(batch.values, x)
        top = r.reshape(len(batch), -1).max(axis=1)
        return top**alpha, _first_argmax(r), batch.weights

    parts = map_blocks(block, n_rep, block_size, workers)
    f = np.concatenate([p[0] for p in parts])
    arg = np.concatenate([p[1] for p in parts])
    w = np.concatenate([p[2] for p in parts])
    est = mean_with_error(f, w)
    if not decompose:
        return est
    shares = {}
    for k, l in th.pairs():
        shares[(k, l)] = mean_with_error(f * (arg == k * locs.n + l), w)
    return est, shares


def exponent_by_tilts(family, locs, thresholds, n_rep=100_000, seed=0, alpha=None, block_size=65536, workers=1,
                      return_terms=False):
    """Exponent by the tilt decomposition.

    Parameters
    ----------
    family : ModelSpec or callable
        ``family(k, h) -> (tilted sampler, E Z_k^alpha(h))``. A ModelSpec
        uses :func:`~maxstable.spectral.tilt_family`. Pairs whose constant is
        zero contribute nothing and are skipped.
    alpha : float, optional
        Taken from the model or the tilted samplers when omitted.

    Returns
    -------
    EstimateWithError, or ``(estimate, terms)`` with ``terms[(k, l)] =
    (constant, probability estimate)``.
    """
    if isinstance(family, ModelSpec):
        alpha = family.alpha if alpha is None else alpha
        family = tilt_family(family)
    locs = as_locations(locs)
    th = as_thresholds(thresholds)
    if th.n != locs.n:
        raise ValueError("thresholds and locations disagree on n")
    x = th.x
    terms = {}
    parts = []
    weighted = False
    for k, l in th.pairs():
        sampler, const = family(k, locs.points[l])
        if const is None:
            raise ValueError(f"missing constant E Z_{k}^alpha(t_{l})")
        if const == 0:
            continue
        a = float(sampler.alpha if alpha is None else alpha)
        target = k * locs.n + l
        term_seed = derive_seed(seed, "tilt-term", k, l)

        def block(s, e, sampler=sampler, term_seed=term_seed, target=target):
            batch = sampler.sample(locs, StreamBatch.for_replicates(term_seed, s, e))
            hit = _first_argmax(_masked_ratio(batch.values, x)) == target
            return hit.astype(float), batch.weights

        out = map_blocks(block, n_rep, block_size, workers)
        w = np.concatenate([o[1] for o in out])
        prob = mean_with_error(np.concatenate([o[0] for o in out]), w)
        weighted = weighted or prob.self_normalized
        scale = 1.0 / x[k, l] ** a
        const_se = getattr(sampler, "a_h_stderr", 0.0)
        se = scale * np.hypot(const * prob.stderr, prob.value * const_se)
        parts.append((scale * const * prob.value, se))
        terms[(k, l)] = (float(const), prob)
    est = _combine(parts, n_rep, self_normalized=weighted)
    return (est, terms) if return_terms else est


# -- Brown-Resnick exact ---------------------------------------------------------


def _deterministic_constraints(mean, var, upper, pairs, anchor_pair, tol):
    """Resolve zero-variance increments with the lexicographic tie rule.

    Returns ``(ok, keep_mask)``; ``ok`` False means the event is empty. A
    pair earlier than the anchor wins ties, so it must be strictly below.
    """
    keep = np.ones(mean.size, dtype=bool)
    for a, (pair, mu, v, ub) in enumerate(zip(pairs, mean, var, upper)):
        if v > tol:
            continue
        keep[a] = False
        if pair < anchor_pair:
            if not mu < ub:
                return False, keep
        elif not mu <= ub:
            return False, keep
    return True, keep


def br_fidi_exact(spec, locs, thresholds, target_rel_err=1e-4, seed=0, return_terms=False):
    """Brown-Resnick exponent from Gaussian rectangle probabilities.

    Term ``(k, l)`` is ``P(Y_i(t_j) - Y_k(t_l) - gamma_ik(t_j, t_l)/2 <=
    ln(x_ij / x_kl) for all other finite (i, j)) / x_kl``. Increments with
    zero variance are decided exactly (ties go to the lexicographically
    smaller pair); the remaining Gaussian must be nonsingular.

    Raises
    ------
    SingularModelError
        The remaining increments have a singular covariance; use
        :func:`exponent_mc` instead.
    """
    v = spec.kind.variogram if isinstance(spec, ModelSpec) else spec
    if isinstance(spec, ModelSpec) and not isinstance(spec.kind, BrownResnick):
        raise TypeError("br_fidi_exact needs a Brown-Resnick model")
    locs = as_locations(locs)
    th = as_thresholds(thresholds, v.d, locs.n)
    pairs = th.pairs()
    if len(pairs) - 1 > gaussian.MAX_RECT_DIM:
        raise ValueError(
            f"{len(pairs) - 1} conditioning variables exceed the rectangle ceiling {gaussian.MAX_RECT_DIM}"
        )
    x = th.x
    comps = np.array([p[0] for p in pairs])
    pts = locs.points[[p[1] for p in pairs]]
    parts, terms, budget = [], {}, False
    for a, (k, l) in enumerate(pairs):
        others = [b for b in range(len(pairs)) if b != a]
        if not others:
            prob = EstimateWithError(1.0, 0.0, 0)
        else:
            mean, P = gaussian.build_increment_cov(v, (k, locs.points[l]), (comps[others], pts[others]))
            upper = np.log(np.array([x[pairs[b]] for b in others]) / x[k, l])
            tol = 1e-12 * max(1.0, np.abs(np.diag(P)).max())
            ok, keep = _deterministic_constraints(mean, np.diag(P), upper, [pairs[b] for b in others], (k, l), tol)
            if not ok:
                prob = EstimateWithError(0.0, 0.0, 0)
            elif not keep.any():
                prob = EstimateWithError(1.0, 0.0, 0)
            else:
                Pk = P[np.ix_(keep, keep)]
                eig = np.linalg.eigvalsh(Pk)
                if eig[0] <= 1e-10 * eig[-1]:
                    raise SingularModelError(
                        "the log-Gaussian increments are singular at these locations "
                        "(e.g. duplicate points); use exponent_mc instead"
                    )
                prob = gaussian.mvn_rect_prob(
                    np.full(keep.sum(), -np.inf),
                    upper[keep],
                    mean[keep],
                    Pk,
                    target_rel_err=target_rel_err,
                    stream=rng_stream(derive_seed(seed, "br-term", k, l)),
                )
        budget = budget or prob.budget_hit
        parts.append((prob.value / x[k, l], prob.stderr / x[k, l]))
        terms[(k, l)] = prob
    est = _combine(parts, 0, budget_hit=budget)
    return (est, terms) if return_terms else est


# -- Smith ------------------------------------------------------------------------


def smith_fidi(spec, locs, thresholds, n_rep=100_000, seed=0, variant="norm", block_size=65536, workers=1):
    """Smith exponent by sampling tilted kernel offsets.

    ``variant="norm"``: ``c_inf * sum_l E[||L(S)/x_l||^alpha / ||L(S)||^alpha
    * 1{infargmax_j ||L(t_j - t_l + S)/x_j|| = l}]`` with sup-norms and ``S``
    of density ``||L||_inf^alpha / c_inf``.

    ``variant="component"``: ``sum_{k,l} c_k / x_kl^alpha * P(infargmax = (k,
    l))`` with ``S_k`` of density ``L_k^alpha / c_k``; components with
    ``c_k = 0`` contribute nothing and are dropped.
    """
    if not isinstance(spec.kind, Smith):
        raise TypeError("smith_fidi needs a Smith model")
    locs = as_locations(locs, spec.p)
    th = as_thresholds(thresholds, spec.d, locs.n)
    if variant == "component":
        return exponent_by_tilts(spec, locs, th, n_rep, seed, spec.alpha, block_size, workers)
    if variant != "norm":
        raise ValueError("variant must be 'norm' or 'component'")
    kernel, alpha, x = spec.kind.kernel, spec.alpha, th.x
    c_inf = kernel.norm_mass(SUP, alpha)
    parts = []
    for l in range(locs.n):
        if not np.isfinite(x[:, l]).any():
            continue
        tilt = SmithTilt(kernel, spec.kind.mixing, alpha, TiltAnchor(locs.points[l], "norm", norm=SUP))
        term_seed = derive_seed(seed, "smith-norm-term", l)

        def block(s, e, tilt=tilt, term_seed=term_seed, l=l):
            batch = tilt.sample(locs, StreamBatch.for_replicates(term_seed, s, e))
            r = _masked_ratio(batch.values, x)
            per_loc = r.max(axis=1)
            win = np.argmax(per_loc, axis=1) == l
            return np.where(win, np.maximum(per_loc[:, l], 0.0) ** alpha, 0.0)

        vals = np.concatenate(map_blocks(block, n_rep, block_size, workers))
        est = mean_with_error(vals)
        parts.append((c_inf * est.value, c_inf * est.stderr))
    return _combine(parts, n_rep)


def _gaussian_kernel_ok(kernel):
    return isinstance(kernel, GaussianDensityKernel) and bool(np.all(kernel.scales == kernel.scales[0]))


def smith_gaussian_exact(spec, locs, thresholds, target_rel_err=1e-4, seed=0, return_terms=False):
    """Smith exponent for a Gaussian-density kernel via rectangle probabilities.

    With ``L`` the ``N(0, s^2 I_p)`` density (identical for all components),
    the component tilt at ``(k, l)`` is ``Theta(t_j) = exp(-D_j . S / s^2 -
    |D_j|^2 / (2 s^2))`` with ``D_j = t_j - t_l`` and ``S ~ N(0, s^2 I / alpha)``;
    each infargmax event is a set of linear inequalities in ``S``. For
    ``p = 1`` the event is an interval and is integrated in closed form.
    """
    kind = spec.kind
    if not isinstance(kind, Smith) or not _gaussian_kernel_ok(kind.kernel):
        raise ExactUnavailableError("closed-form Smith evaluator needs a Gaussian-density kernel with equal scales")
    locs = as_locations(locs, spec.p)
    th = as_thresholds(thresholds, spec.d, locs.n)
    x, alpha = th.x, spec.alpha
    s2 = float(kind.kernel.scales[0]) ** 2
    c = kind.kernel.component_mass(0, alpha)
    pairs = th.pairs()
    parts, terms, budget = [], {}, False
    for k, l in pairs:
        rows, ub = [], []
        empty = False
        # constraints: -D_j . S / s^2 <= ln(x_ij / x_kl) + |D_j|^2 / (2 s^2)
        for j in range(locs.n):
            fin = np.isfinite(x[:, j])
            if not fin.any():
                continue
            D = locs.points[j] - locs.points[l]
            others = [i for i in np.flatnonzero(fin) if (i, j) != (k, l)]
            if not others:
                continue
            if not np.any(D):
                # deterministic: Theta_i(t_j) = 1; earlier pairs win ties
                for i in others:
                    bound = np.log(x[i, j] / x[k, l])
                    strict = (i, j) < (k, l)
                    if bound < 0 or (strict and bound == 0):
                        empty = True
                continue
            bound = min(np.log(x[i, j] / x[k, l]) for i in others) + D @ D / (2 * s2)
            rows.append(-D / s2)
            ub.append(bound)
        if empty:
            prob = EstimateWithError(0.0, 0.0, 0)
        elif not rows:
            prob = EstimateWithError(1.0, 0.0, 0)
        else:
            A = np.array(rows)
            ub = np.array(ub)
            sd_s = np.sqrt(s2 / alpha)
            if spec.p == 1:
                a = A[:, 0] * sd_s
                lo = np.max(ub[a < 0] / a[a < 0], initial=-np.inf)
                hi = np.min(ub[a > 0] / a[a > 0], initial=np.inf)
                prob = EstimateWithError(float(max(0.0, ndtr(hi) - ndtr(lo))), 0.0, 0)
            else:
                C = (A @ A.T) * s2 / alpha
                prob = gaussian.mvn_rect_prob(
                    np.full(ub.size, -np.inf), ub, np.zeros(ub.size), C,
                    target_rel_err=target_rel_err,
                    stream=rng_stream(derive_seed(seed, "smith-term", k, l)),
                )
        budget = budget or prob.budget_hit
        scale = c / x[k, l] ** alpha
        parts.append((scale * prob.value, scale * prob.stderr))
        terms[(k, l)] = prob
    est = _combine(parts, 0, budget_hit=budget)
    return (est, terms) if return_terms else est


# -- dispatch -----------------------------------------------------------------------


def marginal_moments(spec, locs):
    """``E Z_i^alpha(t_j)`` as a ``(d, n)`` array, where known in closed form."""
    locs = as_locations(locs)
    kind = spec.kind
    if isinstance(kind, BrownResnick):
        return np.ones((spec.d, locs.n))
    if isinstance(kind, Smith):
        c = [kind.kernel.component_mass(k, spec.alpha) for k in range(spec.d)]
        return np.repeat(np.array(c)[:, None], locs.n, axis=1)
    if isinstance(kind, Scaled):
        return kind.scaler.moment * marginal_moments(kind.base, locs)
    raise ExactUnavailableError("marginal moments unknown for this model kind")


def exponent_bounds(spec, locs, thresholds):
    """``(max, sum)`` of ``E Z_i^alpha(t_j) / x_ij^alpha`` over finite pairs."""
    th = as_thresholds(thresholds)
    mom = marginal_moments(spec, locs)
    v = np.where(th.finite, mom / np.where(th.finite, th.x, 1.0) ** spec.alpha, 0.0)
    return float(v.max()), float(v.sum())


def exponent_exact(spec, locs, thresholds, target_rel_err=1e-4, seed=0, n_rep=100_000):
    """Model-specific evaluator: Brown-Resnick rectangles, Smith Gaussian
    rectangles (or the norm-form offset sampler for other kernels), and
    ``E R^alpha`` times the base exponent for scaled models."""
    kind = spec.kind
    if isinstance(kind, BrownResnick):
        return br_fidi_exact(spec, locs, thresholds, target_rel_err, seed)
    if isinstance(kind, Smith):
        if _gaussian_kernel_ok(kind.kernel):
            return smith_gaussian_exact(spec, locs, thresholds, target_rel_err, seed)
        return smith_fidi(spec, locs, thresholds, n_rep, seed, "norm")
    if isinstance(kind, Scaled):
        base = exponent_exact(kind.base, locs, thresholds, target_rel_err, seed, n_rep)
        m = kind.scaler.moment
        return EstimateWithError(m * base.value, m * base.stderr, base.n_replicates,
                                 base.self_normalized, base.budget_hit)
    raise ExactUnavailableError("exact evaluator unavailable for this model kind")


@dataclass(frozen=True)
class ExponentRequest:
    """What to evaluate and how.

    ``method`` is ``mc``, ``tilts`` or ``exact``.
    """

    spec: ModelSpec
    locs: LocationSet
    thresholds: object
    method: str = "exact"
    n_rep: int = 100_000
    seed: int = 0
    target_rel_err: float = 1e-4
    workers: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("mc", "tilts", "exact"):
            raise ValueError("method must be one of mc, tilts, exact")
        locs = as_locations(self.locs, self.spec.p)
        object.__setattr__(self, "locs", locs)
        object.__setattr__(self, "thresholds", as_thresholds(self.thresholds, self.spec.d, locs.n))
        if self.method == "exact" and isinstance(self.spec.kind, Custom):
            raise ExactUnavailableError("exact evaluator unavailable for custom samplers")


@dataclass(frozen=True)
class FidiResult:
    exponent: EstimateWithError
    probability: float
    probability_stderr: float
    method: str
    bounds: tuple | None = None

    def to_dict(self):
        out = {
            "method": self.method,
            "exponent": self.exponent.value,
            "stderr": self.exponent.stderr,
            "probability": self.probability,
            "probability_stderr": self.probability_stderr,
            "n_replicates": self.exponent.n_replicates,
            "self_normalized": self.exponent.self_normalized,
            "budget_hit": self.exponent.budget_hit,
        }
        if self.bounds is not None:
            out["bounds"] = list(self.bounds)
        return out


def fidi(request):
    """``P(X <= x) = exp(-exponent)`` with a first-order standard error."""
    r = request
    if r.method == "exact":
        est = exponent_exact(r.spec, r.locs, r.thresholds, r.target_rel_err, r.seed, r.n_rep)
    elif r.method == "mc":
        est = exponent_mc(r.spec, r.locs, r.thresholds, r.n_rep, r.seed, workers=r.workers)
    else:
        est = exponent_by_tilts(r.spec, r.locs, r.thresholds, r.n_rep, r.seed, workers=r.workers)
    p = float(np.exp(-est.value))
    try:
        bounds = exponent_bounds(r.spec, r.locs, r.thresholds)
    except ExactUnavailableError:
        bounds = None
    return FidiResult(est, p, p * est.stderr, r.method, bounds)

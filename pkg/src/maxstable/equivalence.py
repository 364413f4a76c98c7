"""Statistical checks of structural identities for spectral processes.

All tests compare Monte Carlo means through z-scores
``(A - B) / sqrt(se_A^2 + se_B^2)`` and declare ``inconsistent`` when any
``|z|`` exceeds a Bonferroni-corrected critical value (familywise level
``1e-3`` by default) or an explicit ``z_crit``.

* :func:`functional_equivalence_test` -- ``E H(Z) = E H(Z~)`` over a battery
  of alpha-homogeneous functionals.
* :func:`stationarity_test` -- the tilt moment identity
  ``E[Z_k^alpha(h) G(Z)] = E[Z_k^alpha(0) G(B^h Z)]`` and the distributional
  identity ``Theta^[h] = B^h Theta^[0]``, both through degree-0 batteries.
* :func:`rescaled_invariance_test` -- the rescaled spectrum ``Z * F(Z)`` with
  a shift-invariant degree-0 ``F`` generates a stationary process.
* :func:`zonoid_test`, :func:`augmented_identifiability_test`,
  :func:`homogeneous_battery_test` -- (max-)zonoid equivalence of random
  vectors.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .core import SUP, ModelSpec, as_locations, mean_with_error, shift_locations, z_score
from .rng import derive_seed
from .spectral import TiltAnchor, build_sampler, draw, tilt_sampler

DEFAULT_LEVEL = 1e-3
DEFAULT_CLIP = 1e6


def bonferroni_z(n_tests, level=DEFAULT_LEVEL):
    """Two-sided critical value for ``n_tests`` comparisons at familywise ``level``."""
    return float(-ndtri(level / (2 * max(int(n_tests), 1))))


# -- verdicts ---------------------------------------------------------------------


@dataclass
class EquivalenceVerdict:
    """Per-comparison z-scores and the aggregated decision.

    ``decision`` is ``consistent``, ``inconsistent`` or ``not-applicable``.
    ``details`` maps each comparison to its two estimates and standard errors.
    """

    z_scores: dict
    decision: str
    z_crit: float
    level: float | None
    details: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def consistent(self):
        return self.decision == "consistent"

    @property
    def max_abs_z(self):
        return max((abs(z) for z in self.z_scores.values()), default=0.0)

    def to_dict(self):
        return {
            "decision": self.decision,
            "z_crit": self.z_crit,
            "level": self.level,
            "max_abs_z": self.max_abs_z,
            "z_scores": {str(k): v for k, v in self.z_scores.items()},
            "details": {str(k): v for k, v in self.details.items()},
            "notes": list(self.notes),
        }


def _verdict(comparisons, z_crit=None, level=DEFAULT_LEVEL, notes=()):
    """``comparisons``: name -> (EstimateWithError A, EstimateWithError B)."""
    if z_crit is None:
        z_crit = bonferroni_z(len(comparisons), level)
    else:
        level = None
    zs, details = {}, {}
    for name, (a, b) in comparisons.items():
        zs[name] = a.z_against(b)
        details[name] = {"a": a.value, "se_a": a.stderr, "b": b.value, "se_b": b.stderr}
    bad = any(abs(z) > z_crit for z in zs.values())
    return EquivalenceVerdict(zs, "inconsistent" if bad else "consistent", float(z_crit), level, details, list(notes))


def not_applicable(reason):
    return EquivalenceVerdict({}, "not-applicable", float("nan"), None, {}, [reason])


def merge_verdicts(verdicts, z_crit=None, level=DEFAULT_LEVEL, prefixes=None):
    """Pool the comparisons of several verdicts under one multiplicity rule."""
    comps = {}
    notes = []
    for idx, v in enumerate(verdicts):
        pre = prefixes[idx] if prefixes else str(idx)
        notes.extend(v.notes)
        for name, d in v.details.items():
            comps[f"{pre}:{name}"] = (_Est(d["a"], d["se_a"]), _Est(d["b"], d["se_b"]))
    return _verdict(comps, z_crit, level, notes)


@dataclass(frozen=True)
class _Est:
    value: float
    stderr: float

    def z_against(self, other):
        return z_score(self.value, self.stderr, other.value, other.stderr)


# -- functional batteries -----------------------------------------------------------


@dataclass(frozen=True)
class Functional:
    """``fn`` maps ``(m, d, n)`` arrays to ``(m,)`` values; ``degree`` is its
    homogeneity degree."""

    name: str
    fn: Callable
    degree: float


class FunctionalBattery:
    """Named homogeneous functionals on ``(d, n)`` sample matrices.

    Each registered functional is checked for ``H(c f) = c^degree H(f)`` on
    random inputs to relative ``1e-10``; degree-0 members are clipped at
    ``clip`` when evaluated.
    """

    def __init__(self, d, n, alpha=1.0, clip=DEFAULT_CLIP, seed=0):
        self.d = int(d)
        self.n = int(n)
        self.alpha = float(alpha)
        self.clip = float(clip)
        self.members = []
        self._rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def register(self, name, fn, degree, rtol=1e-10):
        f = self._rng.uniform(0.05, 3.0, size=(16, self.d, self.n))
        c = self._rng.uniform(0.1, 10.0, size=16)
        base = np.asarray(fn(f), dtype=float)
        scaled = np.asarray(fn(c[:, None, None] * f), dtype=float)
        want = c**degree * base
        if base.shape != (16,) or not np.allclose(scaled, want, rtol=rtol, atol=1e-300):
            raise ValueError(f"functional {name!r} is not homogeneous of degree {degree}")
        self.members.append(Functional(name, fn, float(degree)))
        return self

    def evaluate(self, values):
        """Dict name -> (values, clipped fraction, infinite fraction)."""
        out = {}
        for h in self.members:
            v = np.asarray(h.fn(values), dtype=float)
            inf = ~np.isfinite(v)
            clipped = 0.0
            if h.degree == 0:
                clipped = float(np.mean(v > self.clip))
                v = np.minimum(v, self.clip)
            out[h.name] = (v, clipped, float(inf.mean()))
        return out

    def restrict(self, degree):
        b = FunctionalBattery(self.d, self.n, self.alpha, self.clip)
        b.members = [h for h in self.members if h.degree == degree]
        return b


def _safe_div(a, b):
    return np.divide(a, b, out=np.zeros(np.broadcast(a, b).shape), where=b > 0)


def _ratio(a, b):
    """``a / b`` with ``0/0 = 0`` and ``a/0 = inf`` for ``a > 0``."""
    pos = b > 0
    return np.where(pos, a / np.where(pos, b, 1.0), np.where(a > 0, np.inf, 0.0))


def default_battery(d, n, alpha=1.0, kind="alpha", seed=0, anchor=0, clip=DEFAULT_CLIP, n_weighted=3):
    """Default functionals.

    ``kind="alpha"``: sup of ``f^alpha``; ``sum f^alpha``; weighted maxima
    ``max (f/x)^alpha`` at random ``x``; products ``g(f / ||f(t_a)||) *
    ||f(t_a)||^alpha`` with bounded degree-0 ``g``.
    ``kind="zero"``: ratios ``f_i(t_j) / max f``, ``f_i(t_j) / ||f(t_a)||``
    (clipped), the share of the maximum at each location and the min/max
    ratio. ``kind="all"`` takes both.
    """
    B = FunctionalBattery(d, n, alpha, clip, seed)
    rng = np.random.default_rng(derive_seed(seed, "battery") % (1 << 63))
    a = alpha

    def sup_at(f, j):
        return f[:, :, j].max(axis=1)

    if kind in ("alpha", "all"):
        B.register("sup", lambda f: f.max(axis=(1, 2)) ** a, a)
        B.register("alpha-sum", lambda f: np.sum(f**a, axis=(1, 2)), a)
        for r in range(n_weighted):
            x = rng.uniform(0.5, 2.0, size=(d, n))
            B.register(f"weighted-max-{r}", lambda f, x=x: np.max(f / x, axis=(1, 2)) ** a, a)
        B.register(
            "anchor-share",
            lambda f: sup_at(f, anchor) ** a * _safe_div(f.max(axis=(1, 2)), f.sum(axis=(1, 2))),
            a,
        )
        if n > 1:
            B.register(
                "anchor-min-ratio",
                lambda f: sup_at(f, anchor) ** a * _safe_div(f.min(axis=(1, 2)), f.max(axis=(1, 2))),
                a,
            )
    if kind in ("zero", "all"):
        for i in range(d):
            for j in range(n):
                B.register(f"rel-max[{i},{j}]", lambda f, i=i, j=j: _safe_div(f[:, i, j], f.max(axis=(1, 2))), 0)
        for j in range(n):
            B.register(
                f"argmax-share[{j}]",
                lambda f, j=j: (np.argmax(f.max(axis=1), axis=1) == j).astype(float),
                0,
            )
        if n > 1:
            B.register("min-over-max", lambda f: _safe_div(f.min(axis=(1, 2)), f.max(axis=(1, 2))), 0)
            other = (anchor + 1) % n
            B.register(f"ratio[{other}/{anchor}]", lambda f: _ratio(sup_at(f, other), sup_at(f, anchor)), 0)
    return B


def _estimates(battery, batch, max_inf=1e-3):
    out, notes = {}, []
    for name, (v, clipped, inf) in battery.evaluate(batch.values).items():
        if inf > max_inf:
            raise ValueError(f"functional {name!r} is infinite on {inf:.3%} of draws; battery misconfigured")
        if clipped:
            notes.append(f"{name}: clipped fraction {clipped:.2e}")
        fin = np.isfinite(v)
        w = batch.weights
        if not fin.all():
            notes.append(f"{name}: dropped {int((~fin).sum())} infinite values")
            v, w = v[fin], w[fin]
        out[name] = mean_with_error(v, w)
    return out, notes


def _as_sampler(s):
    return build_sampler(s) if isinstance(s, ModelSpec) else s


# -- functional equivalence --------------------------------------------------------------


def functional_equivalence_test(sampler_a, sampler_b, battery=None, locs=None, n_rep=100_000, seed=0, seed_b=None,
                                z_crit=None, level=DEFAULT_LEVEL, workers=1):
    """Compare ``E H`` under two spectral samplers over a battery.

    ``seed_b`` defaults to a stream family independent of ``seed``; pass
    ``seed_b=seed`` for common random numbers. The default battery holds the
    alpha-homogeneous functionals, for which equal expectations characterize
    spectral processes of the same max-stable process.
    """
    a, b = _as_sampler(sampler_a), _as_sampler(sampler_b)
    locs = as_locations(locs)
    if battery is None:
        battery = default_battery(a.d, locs.n, a.alpha, "alpha", seed)
    if len(battery) == 0:
        raise ValueError("battery is empty")
    seed_b = derive_seed(seed, "sampler-b") if seed_b is None else seed_b
    ea, na = _estimates(battery, draw(a, locs, n_rep, seed, workers=workers))
    eb, nb = _estimates(battery, draw(b, locs, n_rep, seed_b, workers=workers))
    return _verdict({k: (ea[k], eb[k]) for k in ea}, z_crit, level, na + nb)


# -- stationarity ---------------------------------------------------------------------------


def stationarity_test(spec, shifts, locs, battery=None, components=None, n_rep=100_000, seed=0, z_crit=None,
                      level=DEFAULT_LEVEL, norm=SUP, families=("moment", "tilt"), workers=1, pilot_size=10_000):
    """Stationarity diagnostics through tilted processes.

    Family ``moment``: for each shift ``h``, component ``k`` and degree-0
    ``G``, compare ``E[Z_k^alpha(h) G(Z|locs)]`` with
    ``E[Z_k^alpha(0) G(Z|locs - h)]``.

    Family ``tilt``: compare ``E G(Theta^[h]|locs)`` with
    ``E G(Theta^[0]|locs - h)``, tilting by the norm ``norm``.

    All comparisons are pooled under one multiplicity correction.
    """
    locs = as_locations(locs, spec.p)
    sampler = build_sampler(spec)
    p, d, alpha = spec.p, spec.d, spec.alpha
    if battery is None:
        battery = default_battery(d, locs.n, alpha, "zero", seed)
    if any(h.degree != 0 for h in battery):
        raise ValueError("stationarity batteries must hold degree-0 functionals only")
    comps = range(d) if components is None else components
    origin = np.zeros(p)
    comparisons, notes = {}, []
    for si, h in enumerate(shifts):
        h = np.atleast_1d(np.asarray(h, dtype=float))
        shifted = shift_locations(locs, h)
        if "moment" in families:
            s1 = derive_seed(seed, "moment", si, 0)
            s2 = derive_seed(seed, "moment", si, 1)
            lhs = draw(sampler, locs.concat([h]), n_rep, s1, workers=workers)
            rhs = draw(sampler, shifted.concat([origin]), n_rep, s2, workers=workers)
            for k in comps:
                for name, (va, _, _) in battery.evaluate(lhs.values[:, :, : locs.n]).items():
                    vb = battery.evaluate(rhs.values[:, :, : locs.n])[name][0]
                    fa = lhs.values[:, k, -1] ** alpha * va
                    fb = rhs.values[:, k, -1] ** alpha * vb
                    comparisons[f"moment h={h.tolist()} k={k} {name}"] = (
                        mean_with_error(fa, lhs.weights),
                        mean_with_error(fb, rhs.weights),
                    )
        if "tilt" in families:
            t_h = tilt_sampler(spec, TiltAnchor(h, "norm", norm=norm), pilot_size=pilot_size,
                               pilot_seed=derive_seed(seed, "pilot", si))
            t_0 = tilt_sampler(spec, TiltAnchor(origin, "norm", norm=norm), pilot_size=pilot_size,
                               pilot_seed=derive_seed(seed, "pilot-origin"))
            ea, na = _estimates(battery, draw(t_h, locs, n_rep, derive_seed(seed, "tilt", si, 0), workers=workers))
            eb, nb = _estimates(battery, draw(t_0, shifted, n_rep, derive_seed(seed, "tilt", si, 1), workers=workers))
            notes += na + nb
            for name in ea:
                comparisons[f"tilt h={h.tolist()} {name}"] = (ea[name], eb[name])
    return _verdict(comparisons, z_crit, level, notes)


# -- rescaled spectra -----------------------------------------------------------------------


def symmetrize(F):
    """Average ``F`` over all periodic shifts of the location axis."""

    def G(f):
        n = f.shape[-1]
        return sum(F(np.roll(f, r, axis=-1)) for r in range(n)) / n

    return G


def check_shift_invariant_degree0(F, d, n, seed=0, rtol=1e-10):
    """True when ``F`` is degree-0 homogeneous and invariant under periodic
    shifts of a ``(d, n)`` grid, checked on random positive inputs."""
    rng = np.random.default_rng(seed)
    f = rng.uniform(0.05, 3.0, size=(16, d, n))
    base = np.asarray(F(f), dtype=float)
    c = rng.uniform(0.1, 10.0, size=16)
    if not np.allclose(F(c[:, None, None] * f), base, rtol=rtol, atol=0):
        return False
    return all(np.allclose(F(np.roll(f, r, axis=-1)), base, rtol=rtol, atol=0) for r in range(1, n))


def rescaled_invariance_test(spec, F, window, locs, shifts, n_rep=50_000, seed=0, thresholds=None, z_crit=None,
                             level=DEFAULT_LEVEL, workers=1):
    """Stationarity of the process generated by ``Z~(t) = Z(t) F(Z)``.

    ``F`` acts on draws of ``Z`` over the regular grid ``window`` and must be
    degree-0 homogeneous and invariant under periodic grid shifts; otherwise
    the verdict is ``not-applicable``. The test compares exponents of ``Z~``
    at ``locs`` and ``locs - h`` (at each threshold vector) and the moments
    ``E Z~(t)`` across ``locs``; it also requires ``E Z~(t_0)`` in
    ``(0, inf)``.
    """
    window = as_locations(window, spec.p)
    locs = as_locations(locs, spec.p)
    if not check_shift_invariant_degree0(F, spec.d, window.n, seed):
        return not_applicable("F is not a shift-invariant degree-0 functional on the window grid")
    sampler = build_sampler(spec)
    alpha = spec.alpha
    if thresholds is None:
        thresholds = [np.ones((spec.d, locs.n))]
    thresholds = [np.asarray(x, dtype=float).reshape(spec.d, locs.n) for x in thresholds]

    def tilde(eval_locs, s):
        b = draw(sampler, window.concat(eval_locs), n_rep, s, workers=workers)
        w = b.values[:, :, : window.n]
        return b.values[:, :, window.n:] * np.asarray(F(w), dtype=float)[:, None, None], b.weights

    base_vals, base_w = tilde(locs, derive_seed(seed, "rescaled", "base"))
    norm0 = mean_with_error(base_vals[:, :, 0].max(axis=1) ** alpha, base_w)
    if not (0 < norm0.value < np.inf):
        raise ValueError("E ||Z~(t_0)||^alpha is not in (0, inf) empirically")
    comparisons = {}
    for j in range(1, locs.n):
        comparisons[f"moment t{j} vs t0"] = (
            mean_with_error(base_vals[:, :, j].max(axis=1) ** alpha, base_w),
            norm0,
        )
    for si, h in enumerate(shifts):
        h = np.atleast_1d(np.asarray(h, dtype=float))
        vals, w = tilde(shift_locations(locs, h), derive_seed(seed, "rescaled", si))
        for xi, x in enumerate(thresholds):
            ea = mean_with_error(np.max(base_vals / x[None], axis=(1, 2)) ** alpha, base_w)
            eb = mean_with_error(np.max(vals / x[None], axis=(1, 2)) ** alpha, w)
            comparisons[f"exponent h={h.tolist()} x{xi}"] = (ea, eb)
    v = _verdict(comparisons, z_crit, level)
    v.details["normalization"] = {"a": norm0.value, "se_a": norm0.stderr, "b": norm0.value, "se_b": norm0.stderr}
    return v


# -- zonoids ------------------------------------------------------------------------------------


def default_directions(m, mode="zonoid", n_random=None, seed=0):
    """Basis vectors, all-ones, random unit vectors and signed contrasts.

    Contrasts are ``(m-1) e_i - sum_{j != i} e_j`` and ``e_i - e_j``. In
    ``max-zonoid`` mode only nonnegative directions are kept (random ones are
    folded to ``|u|``).
    """
    rng = np.random.default_rng(derive_seed(seed, "directions") % (1 << 63))
    eye = np.eye(m)
    dirs = [eye[i] for i in range(m)] + [np.ones(m)]
    n_random = 2 * m if n_random is None else n_random
    for _ in range(n_random):
        u = rng.normal(size=m)
        u /= np.linalg.norm(u)
        dirs.append(np.abs(u) if mode == "max-zonoid" else u)
    if mode == "zonoid" and m > 1:
        for i in range(m):
            dirs.append((m - 1) * eye[i] - (np.ones(m) - eye[i]))
        for i in range(m):
            for j in range(i + 1, m):
                dirs.append(eye[i] - eye[j])
    return np.array(dirs)


def _zonoid_values(Z, u, mode):
    if mode == "zonoid":
        return np.abs(Z @ u)
    return np.maximum((Z * u[None, :]).max(axis=1), 0.0)


def zonoid_test(samples_a, samples_b, directions=None, mode="zonoid", z_crit=None, level=DEFAULT_LEVEL, seed=0):
    """Compare ``E |<u, Z>|`` (zonoid) or ``E max(max_i u_i Z_i, 0)``
    (max-zonoid) between two samples of nonnegative ``m``-vectors."""
    if mode not in ("zonoid", "max-zonoid"):
        raise ValueError("mode must be 'zonoid' or 'max-zonoid'")
    A = np.atleast_2d(np.asarray(samples_a, dtype=float))
    B = np.atleast_2d(np.asarray(samples_b, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError("samples must have the same dimension")
    if np.any(A < 0) or np.any(B < 0):
        raise ValueError("zonoid tests need nonnegative vectors")
    if not (np.all(np.isfinite(A.mean(axis=0))) and np.all(np.isfinite(B.mean(axis=0)))):
        raise ValueError("samples must be integrable")
    m = A.shape[1]
    U = default_directions(m, mode, seed=seed) if directions is None else np.atleast_2d(np.asarray(directions, float))
    if mode == "max-zonoid":
        U = U[np.all(U >= 0, axis=1)]
    if U.shape[0] < m or U.shape[1] != m:
        raise ValueError(f"need at least {m} directions of dimension {m}")
    comparisons = {}
    for u in U:
        name = f"u={np.round(u, 6).tolist()}"
        comparisons[name] = (mean_with_error(_zonoid_values(A, u, mode)), mean_with_error(_zonoid_values(B, u, mode)))
    return _verdict(comparisons, z_crit, level, [f"mode={mode}"])


def augmented_identifiability_test(samples_a, samples_b, directions=None, mode="zonoid", z_crit=None,
                                   level=DEFAULT_LEVEL, seed=0):
    """:func:`zonoid_test` on ``(1, Z)``; consistency here is evidence for
    equality in law."""
    A = np.atleast_2d(np.asarray(samples_a, dtype=float))
    B = np.atleast_2d(np.asarray(samples_b, dtype=float))
    A1 = np.hstack([np.ones((A.shape[0], 1)), A])
    B1 = np.hstack([np.ones((B.shape[0], 1)), B])
    return zonoid_test(A1, B1, directions, mode, z_crit, level, seed)


def vector_battery(m, seed=0, degree=1.0):
    """1-homogeneous functionals on ``m``-vectors (as ``(N, 1, m)`` arrays)."""
    B = FunctionalBattery(1, m, degree, seed=seed)
    rng = np.random.default_rng(derive_seed(seed, "vector-battery") % (1 << 63))
    B.register("max", lambda z: z.max(axis=(1, 2)), 1)
    B.register("l1", lambda z: z.sum(axis=(1, 2)), 1)
    B.register("l2", lambda z: np.sqrt(np.sum(z**2, axis=(1, 2))), 1)
    B.register("min", lambda z: z.min(axis=(1, 2)), 1)
    B.register("geometric-mean", lambda z: np.prod(z, axis=(1, 2)) ** (1.0 / m), 1)
    for r in range(3):
        w = rng.uniform(0.2, 2.0, size=m)
        B.register(f"weighted-l3-{r}", lambda z, w=w: np.sum(w * z[:, 0] ** 3, axis=1) ** (1 / 3), 1)
    return B


def homogeneous_battery_test(samples_a, samples_b, battery=None, z_crit=None, level=DEFAULT_LEVEL, seed=0):
    """Compare ``E H`` for 1-homogeneous ``H`` on two vector samples."""
    A = np.atleast_2d(np.asarray(samples_a, dtype=float))
    B = np.atleast_2d(np.asarray(samples_b, dtype=float))
    battery = vector_battery(A.shape[1], seed) if battery is None else battery
    ea = battery.evaluate(A[:, None, :])
    eb = battery.evaluate(B[:, None, :])
    comparisons = {k: (mean_with_error(ea[k][0]), mean_with_error(eb[k][0])) for k in ea}
    return _verdict(comparisons, z_crit, level)

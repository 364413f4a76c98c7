"""Spectral processes and their tilted versions.

A *sampler* emits joint draws of ``Z_i(t_j)`` at a :class:`LocationSet` from
a :class:`~maxstable.rng.StreamBatch`, one replicate per stream::

    batch = sampler.sample(locs, streams)   # SampleBatch, values (m, d, n)

Model kinds (:class:`BrownResnick`, :class:`Smith`, :class:`Scaled`,
:class:`Custom`) live inside a :class:`~maxstable.core.ModelSpec`;
:func:`build_sampler` turns a spec into a sampler and :func:`tilt_sampler`
builds the tilted process at an anchor, picking the exact closed form where
one exists and self-normalized importance weights otherwise.
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import gaussian
from .core import (
    SUP,
    LocationSet,
    ModelSpec,
    NormSpec,
    SampleBatch,
    as_locations,
    fixed_order_matvec,
    map_blocks,
    mean_with_error,
    shift_locations,
    unflatten,
)
from .kernels import Kernel, MixingDensity
from .rng import StreamBatch

# lanes of a replicate stream reserved for auxiliary draws
LANE_SCALER = 101
LANE_MIXTURE = 102


class TiltError(ValueError):
    """The requested tilt is undefined or cannot be sampled as configured."""


# -- model kinds --------------------------------------------------------------


@dataclass(frozen=True)
class BrownResnick:
    """``Z(t) = exp(Y(t) - Var(Y(t)) / 2)`` with ``Y`` described by a variogram."""

    variogram: gaussian.Variogram
    name = "brown-resnick"

    def validate(self, spec):
        if spec.alpha != 1:
            raise ValueError("Brown-Resnick models require alpha = 1")
        if self.variogram.d != spec.d:
            raise ValueError(f"variogram has d={self.variogram.d}, model has d={spec.d}")


@dataclass(frozen=True)
class Smith:
    """``Z(t) = q(W)^(-1/alpha) L(t - W)`` with ``W ~ q``."""

    kernel: Kernel
    mixing: MixingDensity = field(default_factory=MixingDensity)
    name = "smith"

    def validate(self, spec):
        if self.kernel.d != spec.d or self.kernel.p != spec.p:
            raise ValueError("kernel dimensions do not match the model")
        if self.mixing.p != spec.p:
            raise ValueError("mixing density dimension does not match the model")
        masses = [self.kernel.component_mass(k, spec.alpha) for k in range(spec.d)]
        if min(masses) < 0 or not 0 < sum(masses) < np.inf:
            raise ValueError("kernel masses must be finite, nonnegative and not all zero")


@dataclass(frozen=True)
class Scaler:
    """Nonnegative random factor ``R`` with ``E R^alpha = moment``.

    ``kind``: ``constant``, ``uniform`` (``R = b U``) or ``bernoulli``
    (``R = b * 1{U < prob}``), with ``b`` set from ``moment``.
    """

    kind: str = "uniform"
    moment: float = 1.0
    prob: float = 0.5

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "bernoulli"):
            raise ValueError(f"unknown scaler kind {self.kind!r}")
        if not self.moment > 0 or not 0 < self.prob <= 1:
            raise ValueError("scaler needs moment > 0 and prob in (0, 1]")

    def sample(self, u, alpha):
        if self.kind == "constant":
            return np.full_like(u, self.moment ** (1 / alpha))
        if self.kind == "uniform":
            return (self.moment * (alpha + 1)) ** (1 / alpha) * u
        return (self.moment / self.prob) ** (1 / alpha) * (u < self.prob)

    def to_config(self):
        return {"kind": self.kind, "moment": self.moment, "prob": self.prob}


@dataclass(frozen=True)
class Scaled:
    """``R * Z`` for a base model ``Z`` and an independent scaler ``R``."""

    base: ModelSpec
    scaler: Scaler
    name = "scaled"

    def validate(self, spec):
        if (self.base.alpha, self.base.d, self.base.p) != (spec.alpha, spec.d, spec.p):
            raise ValueError("scaled model must share alpha, d and p with its base")


@dataclass(frozen=True)
class Custom:
    """A user-supplied sampler object (no closed forms available)."""

    sampler: Any
    name = "custom"


# -- samplers -----------------------------------------------------------------


def _all_pairs(locs, d):
    """Components and points of every ``(i, t_j)``, location-major."""
    comps = np.tile(np.arange(d), locs.n)
    pts = np.repeat(locs.points, d, axis=0)
    return comps, pts


class Sampler:
    alpha = 1.0
    d = 1
    p = 1
    weighted = False

    def sample(self, locs, streams):
        raise NotImplementedError


class _LawCache:
    def __init__(self, build, size=64):
        self.build = build
        self.size = size
        self.store = {}

    def __call__(self, locs):
        hit = self.store.get(locs)
        if hit is None:
            if len(self.store) >= self.size:
                self.store.clear()
            hit = self.store[locs] = self.build(locs)
        return hit


class BrownResnickSampler(Sampler):
    def __init__(self, variogram):
        self.variogram = variogram
        self.d = variogram.d
        self.alpha = 1.0
        self._law = _LawCache(self._build)

    def _build(self, locs):
        comps, pts = _all_pairs(locs, self.d)
        mean, C = gaussian.log_gaussian_law(self.variogram, comps, pts)
        # E Z = exp(mean + var/2) = 1 per component and location
        drift = np.abs(mean + np.diag(C) / 2)
        if drift.max() > 1e-12 * (1 + np.abs(np.diag(C)).max()):
            raise gaussian.CovarianceError("log-Gaussian drift does not normalize E Z to 1")
        return mean, gaussian.factorize(C)

    def sample(self, locs, streams):
        mean, fac = self._law(locs)
        logz = mean[None, :] + fixed_order_matvec(streams.normal(mean.size), fac.L)
        return SampleBatch(unflatten(np.exp(logz), self.d), np.ones(len(streams)))


class SmithSampler(Sampler):
    def __init__(self, kernel, mixing, alpha):
        self.kernel = kernel
        self.mixing = mixing
        self.alpha = float(alpha)
        self.d = kernel.d
        self.p = kernel.p

    def sample(self, locs, streams):
        W = self.mixing.sample(streams)
        logq = self.mixing.logpdf(W)
        if not np.all(np.isfinite(logq)):
            raise ValueError("mixing density is zero at a drawn point")
        Lv = self.kernel(locs.points[None, :, :] - W[:, None, :])
        vals = np.exp(-logq / self.alpha)[:, None, None] * Lv
        return SampleBatch(np.swapaxes(vals, 1, 2), np.ones(len(streams)))


class ScaledSampler(Sampler):
    def __init__(self, base, scaler, alpha):
        self.base = base
        self.scaler = scaler
        self.alpha = float(alpha)
        self.d = base.d
        self.p = getattr(base, "p", 1)
        self.weighted = base.weighted

    def sample(self, locs, streams):
        R = self.scaler.sample(streams.lane(LANE_SCALER).uniform(), self.alpha)
        b = self.base.sample(locs, streams)
        return SampleBatch(b.values * R[:, None, None], b.weights)


def build_sampler(spec):
    """Sampler of the spectral process described by ``spec``."""
    kind = spec.kind
    if isinstance(kind, BrownResnick):
        return BrownResnickSampler(kind.variogram)
    if isinstance(kind, Smith):
        return SmithSampler(kind.kernel, kind.mixing, spec.alpha)
    if isinstance(kind, Scaled):
        return ScaledSampler(build_sampler(kind.base), kind.scaler, spec.alpha)
    if isinstance(kind, Custom):
        return kind.sampler
    raise TypeError(f"unsupported model kind {type(kind).__name__}")


def draw(sampler, locs, n_rep, seed, start=0, block_size=65536, workers=1):
    """``n_rep`` draws, replicate ``k`` using stream ``start + k`` of ``seed``."""
    locs = as_locations(locs)

    def block(a, b):
        return sampler.sample(locs, StreamBatch.for_replicates(seed, start + a, start + b))

    return SampleBatch.concat(map_blocks(block, n_rep, block_size, workers))


# -- tilted processes ---------------------------------------------------------


@dataclass(frozen=True)
class TiltAnchor:
    """Anchor location ``h`` and tilt mode.

    ``mode="norm"`` tilts by ``||Z(h)||^alpha`` under ``norm``;
    ``mode="component"`` tilts by ``Z_k(h)^alpha``.
    """

    h: Any
    mode: str = "norm"
    k: int = 0
    norm: NormSpec = SUP

    def __post_init__(self):
        if self.mode not in ("norm", "component"):
            raise ValueError("tilt mode must be 'norm' or 'component'")
        object.__setattr__(self, "h", tuple(np.atleast_1d(np.asarray(self.h, dtype=float)).tolist()))

    @property
    def point(self):
        return np.asarray(self.h, dtype=float)

    def anchor_power(self, zh, alpha):
        """Tilt weight ``||z||^alpha`` or ``z_k^alpha`` for rows ``zh`` of shape ``(m, d)``."""
        if self.mode == "component":
            return zh[:, self.k] ** alpha
        return self.norm.power(zh, alpha, axis=-1)

    def anchor_scale(self, zh):
        if self.mode == "component":
            return zh[:, self.k]
        return self.norm(zh, axis=-1)


class BRComponentTilt(Sampler):
    """Exact tilt of a Brown-Resnick spectrum by ``Z_k(h)``.

    ``Theta_i(t) = exp(Y_i(t) - Y_k(h) - gamma_ik(t, h) / 2)``.
    """

    def __init__(self, variogram, anchor):
        if anchor.k >= variogram.d:
            raise TiltError("tilt component index exceeds d")
        self.variogram = variogram
        self.anchor = anchor
        self.d = variogram.d
        self.alpha = 1.0
        self._law = _LawCache(self._build)

    def _build(self, locs):
        comps, pts = _all_pairs(locs, self.d)
        mean, P = gaussian.build_increment_cov(self.variogram, (self.anchor.k, self.anchor.point), (comps, pts))
        return mean, gaussian.factorize(P)

    def sample(self, locs, streams):
        mean, fac = self._law(locs)
        logz = mean[None, :] + fixed_order_matvec(streams.normal(mean.size), fac.L)
        return SampleBatch(unflatten(np.exp(logz), self.d), np.ones(len(streams)))


class SmithTilt(Sampler):
    """Exact tilt of a Smith spectrum: ``Theta(t) = L(t - h + S) / ||L(S)||``.

    ``S`` has density proportional to ``||L||^alpha`` (norm tilt) or
    ``L_k^alpha`` (component tilt) and is drawn by rejection from the mixing
    density, restricted to the kernel's window. The window's excluded mass is
    at most ``truncation_mass``. Mixing densities with lighter tails than the
    tilted offset density are refused when the expected acceptance rate falls
    below ``min_acceptance``.
    """

    def __init__(self, kernel, mixing, alpha, anchor, window_eps=1e-12, envelope=None, min_acceptance=1e-4):
        self.kernel = kernel
        self.mixing = mixing
        self.alpha = float(alpha)
        self.anchor = anchor
        self.d = kernel.d
        self.p = kernel.p
        if anchor.mode == "component":
            if anchor.k >= kernel.d:
                raise TiltError("tilt component index exceeds d")
            if kernel.component_mass(anchor.k, alpha) <= 0:
                raise TiltError(f"component {anchor.k} has zero kernel mass; its tilt is degenerate")
        self.lo, self.hi = kernel.window(alpha, window_eps)
        self.truncation_mass = window_eps if np.isfinite(window_eps) else 0.0
        self.envelope = self._envelope() if envelope is None else float(envelope)
        if anchor.mode == "component":
            mass = kernel.component_mass(anchor.k, alpha)
        else:
            mass = kernel.norm_mass(anchor.norm, alpha)
        # each proposal is accepted with probability (target mass) / envelope
        self.expected_acceptance = mass / self.envelope
        if self.expected_acceptance < min_acceptance:
            raise TiltError(
                f"rejection from the mixing density would accept about {self.expected_acceptance:.1e} of "
                "proposals; use a mixing density with tails at least as wide as the kernel"
            )
        self.proposals = 0
        self.accepted = 0

    def _target(self, s):
        return self.anchor.anchor_power(self.kernel(s).reshape(-1, self.d), self.alpha)

    def _ratio(self, s):
        return self._target(s) * np.exp(-self.mixing.logpdf(s).reshape(-1))

    def _envelope(self):
        per_dim = {1: 20001, 2: 401, 3: 61}.get(self.p, 21)
        axis = np.linspace(self.lo, self.hi, per_dim)
        grid = np.stack(np.meshgrid(*([axis] * self.p), indexing="ij"), axis=-1).reshape(-1, self.p)
        sup = float(self._ratio(grid).max())
        if not sup > 0:
            raise TiltError("tilted location density vanishes on the window")
        return 1.1 * sup

    @property
    def acceptance_rate(self):
        return self.accepted / self.proposals if self.proposals else float("nan")

    def sample_offsets(self, streams, max_rounds=100000):
        """Draw ``S`` (shape ``(m, p)``) by rejection."""
        m = len(streams)
        S = np.empty((m, self.p))
        pending = np.arange(m)
        for _ in range(max_rounds):
            if pending.size == 0:
                return S
            sub = streams.subset(pending)
            W = self.mixing.sample(sub)
            u = sub.uniform()
            streams.update(pending, sub)
            inside = np.all((W >= self.lo) & (W <= self.hi), axis=1)
            ratio = np.where(inside, self._ratio(W), 0.0)
            if np.any(ratio > self.envelope * (1 + 1e-9)):
                raise TiltError("rejection proposal does not dominate the tilted location density")
            acc = u * self.envelope < ratio
            self.proposals += pending.size
            self.accepted += int(acc.sum())
            S[pending[acc]] = W[acc]
            pending = pending[~acc]
        raise TiltError("rejection sampler exceeded its round limit")

    def sample(self, locs, streams):
        S = self.sample_offsets(streams)
        rel = locs.points - self.anchor.point
        Lt = self.kernel(rel[None, :, :] + S[:, None, :])
        denom = self.anchor.anchor_scale(self.kernel(S))
        vals = Lt / denom[:, None, None]
        return SampleBatch(np.swapaxes(vals, 1, 2), np.ones(len(streams)))


class WeightedTilt(Sampler):
    """Tilt of an arbitrary sampler by importance weights.

    Emits ``Z / ||Z(h)||`` with weight ``w * ||Z(h)||^alpha / a_h``; draws with
    ``||Z(h)|| = 0`` get weight 0. ``a_h`` is estimated on a pilot run when
    not supplied. Downstream estimators self-normalize.
    """

    weighted = True

    def __init__(self, base, anchor, a_h=None, pilot_size=10_000, pilot_seed=0):
        self.base = base
        self.anchor = anchor
        self.alpha = base.alpha
        self.d = base.d
        self.p = getattr(base, "p", len(anchor.h))
        if a_h is None:
            pilot = draw(base, LocationSet([anchor.point]), pilot_size, pilot_seed)
            est = mean_with_error(anchor.anchor_power(pilot.values[:, :, 0], self.alpha), pilot.weights)
            a_h, self.a_h_stderr = est.value, est.stderr
        else:
            self.a_h_stderr = 0.0
        if not a_h > 0:
            raise TiltError("anchor normalization is zero: the tilt is undefined")
        self.a_h = float(a_h)

    def sample(self, locs, streams):
        idx = locs.index_of(self.anchor.point)
        ev = locs if idx is not None else locs.concat([self.anchor.point])
        if idx is None:
            idx = locs.n
        b = self.base.sample(ev, streams)
        zh = b.values[:, :, idx]
        scale = self.anchor.anchor_scale(zh)
        pos = scale > 0
        safe = np.where(pos, scale, 1.0)
        vals = np.where(pos[:, None, None], b.values / safe[:, None, None], 0.0)
        w = np.where(pos, b.weights * self.anchor.anchor_power(zh, self.alpha) / self.a_h, 0.0)
        return SampleBatch(vals[:, :, : locs.n], w)


def _unit_norm(norm, d):
    return d == 1 and float(norm(np.ones(1))) == 1.0


def tilt_sampler(base, anchor, a_h=None, pilot_size=10_000, pilot_seed=0):
    """Sampler of the tilted process at ``anchor``.

    Regimes: exact log-Gaussian increments for Brown-Resnick component tilts
    (and norm tilts when ``d = 1``, where the two coincide); exact shifted
    kernels for Smith models; importance weights for everything else.
    """
    if isinstance(base, ModelSpec):
        kind = base.kind
        if isinstance(kind, BrownResnick):
            if anchor.mode == "component":
                return BRComponentTilt(kind.variogram, anchor)
            if _unit_norm(anchor.norm, base.d):
                return BRComponentTilt(kind.variogram, TiltAnchor(anchor.h, "component", 0))
        if isinstance(kind, Smith):
            return SmithTilt(kind.kernel, kind.mixing, base.alpha, anchor)
        base = build_sampler(base)
    return WeightedTilt(base, anchor, a_h, pilot_size, pilot_seed)


def tilt_family(spec, pilot_size=10_000, pilot_seed=0):
    """``(k, h) -> (sampler of Theta^[h,k], E Z_k^alpha(h))`` for ``spec``."""

    def family(k, h):
        anchor = TiltAnchor(h, "component", k)
        kind = spec.kind
        if isinstance(kind, BrownResnick):
            return BRComponentTilt(kind.variogram, anchor), 1.0
        if isinstance(kind, Smith):
            mass = kind.kernel.component_mass(k, spec.alpha)
            if mass <= 0:
                return None, 0.0
            return SmithTilt(kind.kernel, kind.mixing, spec.alpha, anchor), mass
        t = tilt_sampler(spec, anchor, pilot_size=pilot_size, pilot_seed=pilot_seed)
        return t, t.a_h

    return family


class MixtureSampler(Sampler):
    """Spectral process rebuilt from tilts over a finite grid.

    Draws ``W`` from ``pmf`` on ``grid``, then ``Theta^[W]`` jointly at the
    grid and the requested locations, and emits
    ``Theta^[W](t) / (sum_s ||Theta^[W](s)||^alpha p(s))^(1/alpha)``.

    With ``stationary=True`` a single tilt at the origin is shifted:
    ``Theta(t - W) / (sum_s ||Theta(s - W)||^alpha p(s))^(1/alpha)``.
    """

    def __init__(self, tilt_factory, grid, pmf, alpha, d, norm=SUP, stationary=False):
        self.grid = as_locations(grid)
        pmf = np.asarray(pmf, dtype=float)
        if pmf.shape != (self.grid.n,) or np.any(pmf <= 0) or abs(pmf.sum() - 1) > 1e-12:
            raise ValueError("pmf must be strictly positive on the grid and sum to 1")
        self.pmf = pmf
        self.cdf = np.cumsum(pmf)
        self.tilt_factory = tilt_factory
        self.alpha = float(alpha)
        self.d = d
        self.p = self.grid.p
        self.norm = norm
        self.stationary = stationary
        self._tilts = {}
        self.weighted = self._tilt(0).weighted

    def _tilt(self, g):
        key = -1 if self.stationary else g
        if key not in self._tilts:
            h = np.zeros(self.p) if self.stationary else self.grid.points[g]
            self._tilts[key] = self.tilt_factory(h)
        return self._tilts[key]

    def sample(self, locs, streams):
        m = len(streams)
        G = self.grid.n
        u = streams.lane(LANE_MIXTURE).uniform()
        widx = np.minimum(np.searchsorted(self.cdf, u, side="right"), G - 1)
        vals = np.empty((m, self.d, locs.n))
        w = np.empty(m)
        for g in np.unique(widx):
            sel = np.flatnonzero(widx == g)
            sub = streams.subset(sel)
            if self.stationary:
                wpt = self.grid.points[g]
                ev = shift_locations(self.grid, wpt).concat(shift_locations(locs, wpt))
            else:
                ev = self.grid.concat(locs)
            b = self._tilt(g).sample(ev, sub)
            streams.update(sel, sub)
            on_grid = b.values[:, :, :G]
            total = np.zeros(sel.size)
            for s in range(G):
                total += self.norm.power(on_grid[:, :, s], self.alpha, axis=-1) * self.pmf[s]
            if np.any(total[b.weights > 0] <= 0):
                raise ArithmeticError("mixture normalizing sum vanished")
            total = np.where(total > 0, total, 1.0)
            vals[sel] = b.values[:, :, G:] / total[:, None, None] ** (1 / self.alpha)
            w[sel] = b.weights
        return SampleBatch(vals, w)


def mixture_sampler(spec_or_factory, grid, pmf, alpha=None, d=None, norm=SUP, stationary=False, **tilt_kw):
    """Mixture reconstruction from a model spec (norm tilts) or a tilt factory."""
    if isinstance(spec_or_factory, ModelSpec):
        spec = spec_or_factory

        def factory(h):
            return tilt_sampler(spec, TiltAnchor(h, "norm", norm=norm), **tilt_kw)

        return MixtureSampler(factory, grid, pmf, spec.alpha, spec.d, norm, stationary)
    return MixtureSampler(spec_or_factory, grid, pmf, alpha, d, norm, stationary)

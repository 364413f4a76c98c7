"""Smith kernels ``L: R^p -> [0, inf)^d`` and mixing densities.

Registry names: ``gaussian-density``, ``indicator-box``, ``triangle``.
Kernel masses ``c_k = int L_k^alpha`` are closed form; norm masses
``int ||L||^alpha`` are closed form where possible and otherwise computed by
quadrature, with the quadrature error estimate recorded in ``mass_errors``.
"""

import math

import numpy as np
from scipy import integrate, special, stats

from .core import SUP


class Kernel:
    name = "kernel"

    def __init__(self, d, p):
        self.d = int(d)
        self.p = int(p)
        self.mass_errors = {}

    def __call__(self, t):
        """Evaluate at points ``t`` of shape ``(..., p)``; returns ``(..., d)``."""
        raise NotImplementedError

    def component_mass(self, k, alpha):
        raise NotImplementedError

    def window(self, alpha, eps=1e-12):
        """Box ``(lo, hi)`` outside of which at most ``eps`` of the tilted
        location mass lies, for every component and norm."""
        raise NotImplementedError

    def norm_mass(self, norm=SUP, alpha=1.0):
        """``int ||L(t)||^alpha dt``."""
        if norm.kind == "l_alpha" and norm.order == alpha:
            return sum(self.component_mass(k, alpha) for k in range(self.d))
        if self.d == 1 or self._identical():
            return self.component_mass(0, alpha) * float(norm(np.ones(self.d))) ** alpha
        return self._norm_mass_numeric(norm, alpha)

    def _identical(self):
        return False

    def _norm_mass_numeric(self, norm, alpha):
        lo, hi = self.window(alpha, eps=1e-14)
        if self.p > 3:
            raise ValueError("numeric norm mass supported for p <= 3; supply masses")

        def f(*x):
            return float(norm.power(self(np.array(x)), alpha))

        val, err = integrate.nquad(f, [[lo, hi]] * self.p, opts={"limit": 200})
        self.mass_errors[(norm.kind, norm.order, alpha)] = err
        return val

    def to_config(self):
        raise NotImplementedError


class GaussianDensityKernel(Kernel):
    """``L_i(t)`` = isotropic N(0, scale_i^2 I_p) density."""

    name = "gaussian-density"

    def __init__(self, scales=(1.0,), p=1):
        scales = np.atleast_1d(np.asarray(scales, dtype=float))
        if np.any(scales <= 0):
            raise ValueError("scales must be positive")
        super().__init__(scales.size, p)
        self.scales = scales

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        r2 = np.sum(t**2, axis=-1)[..., None]
        s2 = self.scales**2
        return np.exp(-r2 / (2 * s2)) / (2 * np.pi * s2) ** (self.p / 2)

    def component_mass(self, k, alpha):
        s2 = self.scales[k] ** 2
        return float((2 * np.pi * s2) ** (self.p * (1 - alpha) / 2) * alpha ** (-self.p / 2))

    def _identical(self):
        return bool(np.all(self.scales == self.scales[0]))

    def window(self, alpha, eps=1e-12):
        # tilted law of each coordinate is N(0, s^2/alpha); union bound over p
        z = -special.ndtri(eps / (2 * self.p))
        r = float(self.scales.max() / np.sqrt(alpha) * z)
        return -r, r

    def _norm_mass_numeric(self, norm, alpha):
        # radial: surface area of the unit sphere times a 1-D integral
        area = 2 * np.pi ** (self.p / 2) / math.gamma(self.p / 2)
        _, rmax = self.window(alpha, eps=1e-16)

        def f(r):
            pt = np.zeros(self.p)
            pt[0] = r
            return r ** (self.p - 1) * float(norm.power(self(pt), alpha))

        val, err = integrate.quad(f, 0, rmax, limit=200, epsabs=1e-13, epsrel=1e-11)
        self.mass_errors[(norm.kind, norm.order, alpha)] = area * err
        return float(area * val)

    def to_config(self):
        return {"name": self.name, "scales": self.scales.tolist(), "p": self.p}


class BoxKernel(Kernel):
    """``L_i(t) = height_i * 1{t in [0, width_i]^p}`` (nested boxes)."""

    name = "indicator-box"

    def __init__(self, widths=(1.0,), heights=None, p=1):
        widths = np.atleast_1d(np.asarray(widths, dtype=float))
        heights = np.ones_like(widths) if heights is None else np.atleast_1d(np.asarray(heights, float))
        if widths.shape != heights.shape or np.any(widths <= 0) or np.any(heights < 0):
            raise ValueError("widths must be positive and heights nonnegative, same length")
        super().__init__(widths.size, p)
        self.widths = widths
        self.heights = heights

    def __call__(self, t):
        t = np.asarray(t, dtype=float)[..., None, :]
        inside = np.all((t >= 0) & (t <= self.widths[:, None]), axis=-1)
        return self.heights * inside

    def component_mass(self, k, alpha):
        return float(self.heights[k] ** alpha * self.widths[k] ** self.p)

    def window(self, alpha, eps=1e-12):
        return 0.0, float(self.widths.max())

    def _norm_mass_numeric(self, norm, alpha):
        # exact: integrate over shells between consecutive widths
        ws = np.unique(self.widths)
        total, prev = 0.0, 0.0
        for w in ws:
            vec = self.heights * (self.widths >= w)
            total += (w**self.p - prev**self.p) * float(norm.power(vec, alpha))
            prev = w
        return total

    def to_config(self):
        return {"name": self.name, "widths": self.widths.tolist(), "heights": self.heights.tolist(), "p": self.p}


class TriangleKernel(Kernel):
    """``L_i(t) = height_i * prod_r max(0, 1 - |t_r| / width_i)``."""

    name = "triangle"

    def __init__(self, widths=(1.0,), heights=None, p=1):
        widths = np.atleast_1d(np.asarray(widths, dtype=float))
        heights = np.ones_like(widths) if heights is None else np.atleast_1d(np.asarray(heights, float))
        if widths.shape != heights.shape or np.any(widths <= 0) or np.any(heights < 0):
            raise ValueError("widths must be positive and heights nonnegative, same length")
        super().__init__(widths.size, p)
        self.widths = widths
        self.heights = heights

    def __call__(self, t):
        t = np.asarray(t, dtype=float)[..., None, :]
        f = np.clip(1 - np.abs(t) / self.widths[:, None], 0, None)
        return self.heights * np.prod(f, axis=-1)

    def component_mass(self, k, alpha):
        return float(self.heights[k] ** alpha * (2 * self.widths[k] / (alpha + 1)) ** self.p)

    def _identical(self):
        return bool(np.all(self.widths == self.widths[0]) and np.all(self.heights == self.heights[0]))

    def window(self, alpha, eps=1e-12):
        w = float(self.widths.max())
        return -w, w

    def to_config(self):
        return {"name": self.name, "widths": self.widths.tolist(), "heights": self.heights.tolist(), "p": self.p}


KERNELS = {cls.name: cls for cls in (GaussianDensityKernel, BoxKernel, TriangleKernel)}


def kernel_from_config(cfg):
    cfg = dict(cfg)
    name = cfg.pop("name", "gaussian-density")
    if name not in KERNELS:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}")
    return KERNELS[name](**cfg)


class MixingDensity:
    """Positive density ``q`` on R^p with independent coordinates.

    ``kind`` is ``normal`` or ``student-t`` (with ``df``).
    """

    def __init__(self, kind="normal", scale=1.0, p=1, df=4.0):
        if kind not in ("normal", "student-t"):
            raise ValueError(f"unknown mixing density {kind!r}")
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.kind = kind
        self.scale = float(scale)
        self.p = int(p)
        self.df = float(df)

    def _dist(self):
        if self.kind == "normal":
            return stats.norm(scale=self.scale)
        return stats.t(self.df, scale=self.scale)

    def sample(self, streams):
        u = streams.uniform(self.p)
        if self.kind == "normal":
            return self.scale * special.ndtri(u)
        return self._dist().ppf(u)

    def logpdf(self, w):
        w = np.asarray(w, dtype=float)
        return np.sum(self._dist().logpdf(w), axis=-1)

    def to_config(self):
        cfg = {"kind": self.kind, "scale": self.scale}
        if self.kind == "student-t":
            cfg["df"] = self.df
        return cfg


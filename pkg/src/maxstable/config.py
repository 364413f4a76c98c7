"""TOML run configuration.

Schema (all sections optional except ``model``)::

    [model]
    alpha = 1.0
    d = 1
    p = 1
    kind = "brown-resnick"        # brown-resnick | smith | scaled | custom

    [model.variogram]             # brown-resnick
    kind = "fractional"           # fractional | fbm | quadratic-time
    scale = 1.0
    nu = 1.0
    component_cov = [[0.0]]       # fractional, optional
    root = [0.0]                  # fbm, optional
    corr = [[1.0]]                # fbm, optional

    [model.kernel]                # smith
    name = "gaussian-density"     # gaussian-density | indicator-box | triangle
    scales = [1.0]                # or widths/heights for the others
    [model.mixing]                # smith, optional
    kind = "normal"               # normal | student-t
    scale = 1.0

    [model.scaler]                # scaled
    kind = "uniform"              # constant | uniform | bernoulli
    moment = 1.0
    [model.base]                  # scaled: a nested [model] table

    sampler = "pkg.module:factory"   # custom: factory(alpha, d, p) -> sampler

    [locations]
    points = [[0.0], [4.0]]       # or csv = "locs.csv"
    [thresholds]
    x = [[1.0, 1.0]]              # d rows, n columns; inf allowed; or csv = ...
    [cascade]
    max_points = 100000
    tail_guard = 5.0
    [check]                       # options for ``maxstable check``
"""

import importlib
import os
import sys

import numpy as np

from . import gaussian, spectral
from .core import LocationSet, ModelSpec, ThresholdMatrix, read_locations_csv, read_thresholds_csv
from .kernels import MixingDensity, kernel_from_config
from .simulate import CascadeConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """A configuration file is malformed; the message names the file and field."""


def load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _field(cfg, key, where, cast=None, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"{where}: missing required field '{key}'")
        return default
    val = cfg[key]
    if cast is None:
        return val
    try:
        return cast(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: field '{key}' = {val!r}: {exc}") from None


def _wrap(where, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def model_from_dict(cfg, where="model"):
    """Build a :class:`ModelSpec` from a ``[model]`` table."""
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}: expected a table")
    alpha = _field(cfg, "alpha", where, float, 1.0)
    d = _field(cfg, "d", where, int, 1)
    p = _field(cfg, "p", where, int, 1)
    kind = _field(cfg, "kind", where, str, required=True)
    if kind == "brown-resnick":
        vcfg = _field(cfg, "variogram", where, dict, {})
        v = _wrap(f"{where}.variogram", gaussian.variogram_from_config, vcfg, d)
        k = spectral.BrownResnick(v)
    elif kind == "smith":
        kcfg = dict(_field(cfg, "kernel", where, dict, {}))
        kcfg.setdefault("p", p)
        kern = _wrap(f"{where}.kernel", kernel_from_config, kcfg)
        mcfg = dict(_field(cfg, "mixing", where, dict, {}))
        mcfg.setdefault("p", p)
        mix = _wrap(f"{where}.mixing", MixingDensity, **mcfg)
        k = spectral.Smith(kern, mix)
    elif kind == "scaled":
        base = model_from_dict(_field(cfg, "base", where, dict, required=True), f"{where}.base")
        scaler = _wrap(f"{where}.scaler", spectral.Scaler, **_field(cfg, "scaler", where, dict, {}))
        k = spectral.Scaled(base, scaler)
    elif kind == "custom":
        target = _field(cfg, "sampler", where, str, required=True)
        mod, _, attr = target.partition(":")
        try:
            factory = getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"{where}: field 'sampler' = {target!r}: {exc}") from None
        k = spectral.Custom(factory(alpha, d, p))
    else:
        raise ConfigError(f"{where}: field 'kind' = {kind!r}: expected brown-resnick, smith, scaled or custom")
    return _wrap(where, ModelSpec, alpha, d, p, k)


def _resolve(path, base_dir):
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def locations_from_dict(cfg, base_dir=".", where="locations"):
    if "csv" in cfg:
        return _wrap(where, read_locations_csv, _resolve(cfg["csv"], base_dir))
    return _wrap(where, LocationSet, _field(cfg, "points", where, required=True))


def thresholds_from_dict(cfg, base_dir=".", where="thresholds"):
    if "csv" in cfg:
        return _wrap(where, read_thresholds_csv, _resolve(cfg["csv"], base_dir))
    return _wrap(where, ThresholdMatrix, np.asarray(_field(cfg, "x", where, required=True), dtype=float))


class RunConfig:
    """A parsed configuration file."""

    def __init__(self, raw, path="<memory>"):
        self.raw = raw
        self.path = path
        self.base_dir = os.path.dirname(os.path.abspath(path)) if path != "<memory>" else "."
        if "model" not in raw:
            raise ConfigError(f"{path}: missing required section [model]")
        self.spec = model_from_dict(raw["model"], f"{path}: model")
        self.locations = (
            locations_from_dict(raw["locations"], self.base_dir, f"{path}: locations") if "locations" in raw else None
        )
        self.thresholds = (
            thresholds_from_dict(raw["thresholds"], self.base_dir, f"{path}: thresholds")
            if "thresholds" in raw
            else None
        )
        self.cascade = _wrap(f"{path}: cascade", CascadeConfig, **raw.get("cascade", {}))
        self.check = dict(raw.get("check", {}))


def load_config(path):
    return RunConfig(load_toml(path), path)

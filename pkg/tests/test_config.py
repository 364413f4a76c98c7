from pathlib import Path

import numpy as np
import pytest

from maxstable.config import ConfigError, RunConfig, load_config, load_toml, model_from_dict
from maxstable.spectral import BrownResnick, Custom, Scaled, Smith

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


MODEL_CONFIGS = [p for p in sorted(CONFIGS.glob("*.toml")) if not p.stem.startswith("zonoid")]


@pytest.mark.parametrize("path", MODEL_CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.spec.alpha > 0


def test_zonoid_configs_are_plain_toml():
    raw = load_toml(CONFIGS / "zonoid_bernoulli.toml")
    assert "zonoid" in raw and "model" not in raw


def test_model_kinds():
    assert isinstance(load_config(CONFIGS / "br_brownian.toml").spec.kind, BrownResnick)
    assert isinstance(load_config(CONFIGS / "smith_gaussian.toml").spec.kind, Smith)
    assert isinstance(load_config(CONFIGS / "br_scaled.toml").spec.kind, Scaled)
    assert isinstance(load_config(CONFIGS / "custom_unit.toml").spec.kind, Custom)
    d2 = load_config(CONFIGS / "br_d2.toml")
    assert d2.spec.d == 2 and np.isinf(d2.thresholds.x[1, 1])


@pytest.mark.parametrize(
    "raw,match",
    [
        ({}, "missing required section"),
        ({"model": {}}, "missing required field 'kind'"),
        ({"model": {"kind": "nope"}}, "field 'kind'"),
        ({"model": {"kind": "brown-resnick", "alpha": "x"}}, "field 'alpha'"),
        ({"model": {"kind": "brown-resnick", "alpha": 2.0}}, "alpha = 1"),
        ({"model": {"kind": "brown-resnick", "variogram": {"kind": "fractional", "nu": 3}}}, "model.variogram"),
        ({"model": {"kind": "smith", "kernel": {"name": "nope"}}}, "model.kernel"),
        ({"model": {"kind": "custom", "sampler": "no_such_module:f"}}, "field 'sampler'"),
        ({"model": {"kind": "scaled"}}, "missing required field 'base'"),
        ({"model": {"kind": "brown-resnick"}, "locations": {"points": []}}, "locations"),
        ({"model": {"kind": "brown-resnick"}, "thresholds": {"x": [[-1.0]]}}, "thresholds"),
        ({"model": {"kind": "brown-resnick"}, "cascade": {"max_points": 0}}, "cascade"),
        ({"model": {"kind": "brown-resnick"}, "cascade": {"bogus": 1}}, "cascade"),
    ],
)
def test_config_errors_name_the_field(raw, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig(raw)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[model\n")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(bad)


def test_csv_paths_are_relative_to_config(tmp_path):
    (tmp_path / "locs.csv").write_text("x0\n0\n1\n")
    (tmp_path / "th.csv").write_text("t0,t1\n1,inf\n")
    (tmp_path / "run.toml").write_text(
        '[model]\nkind = "brown-resnick"\n[locations]\ncsv = "locs.csv"\n[thresholds]\ncsv = "th.csv"\n'
    )
    cfg = load_config(tmp_path / "run.toml")
    assert cfg.locations.n == 2 and np.isinf(cfg.thresholds.x[0, 1])


def test_nested_scaled_model():
    spec = model_from_dict(
        {"kind": "scaled", "scaler": {"kind": "bernoulli", "moment": 2.0, "prob": 0.25},
         "base": {"kind": "smith", "alpha": 1.0}}
    )
    assert spec.kind.scaler.prob == 0.25 and isinstance(spec.kind.base.kind, Smith)

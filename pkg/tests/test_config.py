import json
import math

import pytest

from dualspdc.config import config_hash, default_config_dict, load_config
from dualspdc.errors import ConfigError


def test_default_config_operating_point():
    cfg = load_config()
    assert cfg.collection.iris_diameter_mm == 4.0 and cfg.collection.filter_key == "3nm"
    assert cfg.source.window == pytest.approx(39.4e-9)
    assert cfg.target_phase == pytest.approx(math.pi)
    assert len(cfg.hash) == 64


def test_partial_file_merges_with_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 5, "source": {"pump_power_mW": 0.5}}))
    cfg = load_config(p)
    assert cfg.seed == 5 and cfg.source.pump_power_mw == 0.5
    assert cfg.source.eta1 == load_config().source.eta1
    assert cfg.hash != load_config().hash


def test_hash_is_canonical():
    raw = default_config_dict()
    reordered = json.loads(json.dumps(raw, sort_keys=True))
    assert config_hash(raw) == config_hash(dict(reversed(list(reordered.items()))))


@pytest.mark.parametrize(
    "override",
    [
        {"source": {"eta1": 1.5}},
        {"collection": {"filter": "green"}},
        {"collection": {"iris_diameter_mm": -1}},
        {"crystal": {"grating_period_um": 0}},
        {"sellmeier_file": "missing.json"},
        {"lock": {"tap": 0}},
        {"visibility_table": {"none": {"diameters_mm": [1.0], "visibility": [0.9]}}},
    ],
)
def test_invalid_configs_raise(override):
    with pytest.raises(ConfigError):
        load_config(overrides=override)


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_sellmeier_file_relative_to_config(tmp_path):
    from importlib import resources

    text = resources.files("dualspdc.data").joinpath("ktp_kato2002.json").read_text()
    (tmp_path / "mine.json").write_text(text)
    (tmp_path / "c.json").write_text(json.dumps({"sellmeier_file": "mine.json"}))
    assert load_config(tmp_path / "c.json").sellmeier.source.endswith("mine.json")

import json

import pytest

from modelcollapse.config import ConfigError, dumps_config, from_mapping, load_config, parse_override

BASE = {"a": 0.3, "b": 0.25, "c": 0.75, "N": 4, "horizon": 10, "mu0": [0.2, 0.3, 0.5], "master_seed": 9}


def test_defaults_fill_in():
    cfg = from_mapping({"a": 0.0, "N": 2, "horizon": 5, "mu0": [0.5, 0.5]})
    assert (cfg.b, cfg.c) == (0.0, 1.0)
    assert cfg.theta0 == cfg.mu0
    assert cfg.mu_start == cfg.mu0
    assert cfg.K == 2
    assert cfg.master_seed == 0


def test_c_defaults_from_b():
    cfg = from_mapping({**BASE, "c": None})
    assert cfg.c == 0.75


def test_b_plus_c_must_be_one():
    with pytest.raises(ConfigError) as err:
        from_mapping({**BASE, "b": 0.2, "c": 0.7})
    assert err.value.field == "b+c"
    assert "b + c = 1" in str(err.value)


@pytest.mark.parametrize(
    "key, value",
    [("a", 1.5), ("a", "x"), ("N", 0), ("N", 2.5), ("horizon", 0), ("master_seed", -1),
     ("master_seed", 2**64), ("mu0", [0.5, 0.6]), ("mu0", "abc"), ("source_choice", "per_batch"),
     ("theta0", [1.0])],
)
def test_field_level_validation(key, value):
    with pytest.raises(ConfigError) as err:
        from_mapping({**BASE, key: value})
    assert err.value.field == key


def test_declared_size_must_match_mu0():
    with pytest.raises(ConfigError) as err:
        from_mapping({**BASE, "K": 4})
    assert err.value.field in ("K", "mu0")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        from_mapping({**BASE, "gamma": 1})


def test_missing_key():
    data = dict(BASE)
    del data["mu0"]
    with pytest.raises(ConfigError) as err:
        from_mapping(data)
    assert err.value.field == "mu0"


def test_round_trip_is_identical(tmp_path):
    cfg = from_mapping({**BASE, "coords": [0.0, 1.0, 3.0], "labels": ["x", "y", "z"]})
    path = tmp_path / "c.json"
    path.write_text(dumps_config(cfg))
    again = load_config(path)
    assert again == cfg
    assert again.digest() == cfg.digest()
    assert dumps_config(again) == dumps_config(cfg)


def test_round_trip_after_renormalization(tmp_path):
    cfg = from_mapping({**BASE, "mu0": [0.1, 0.2, 0.7 + 5e-11]})
    path = tmp_path / "c.json"
    path.write_text(dumps_config(cfg))
    assert load_config(path) == cfg


def test_digest_sensitivity():
    cfg = from_mapping(BASE)
    assert cfg.with_overrides(a=0.0).digest() != cfg.digest()
    assert cfg.with_overrides(master_seed=10).digest() != cfg.digest()
    assert cfg.with_overrides(labels=["p", "q", "r"]).digest() == cfg.digest()
    assert from_mapping(dict(BASE)).digest() == cfg.digest()


def test_overrides_parse_json_values(tmp_path):
    assert parse_override("a=0") == ("a", 0)
    assert parse_override("mu0=[0.5, 0.5]") == ("mu0", [0.5, 0.5])
    assert parse_override("source_choice=per_sample") == ("source_choice", "per_sample")
    with pytest.raises(ConfigError):
        parse_override("novalue")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(BASE))
    assert load_config(path, ["a=0"]).a == 0.0


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)

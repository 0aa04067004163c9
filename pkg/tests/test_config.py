"""Config defaults, TOML parsing, validation, and echo round-trip."""

import pytest

from hhgr.config import RunConfig, config_meta, echo_config, load_config
from hhgr.errors import ConfigError


def write(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults_match_documented_values():
    cfg = load_config()
    assert cfg.mode == "S2"
    assert cfg.d == 64
    assert cfg.batch_size == 512
    assert cfg.n_neg == 10
    assert cfg.lr_pretrain == 5e-4
    assert cfg.lr_main == 1e-4
    assert cfg.l_u == 2
    assert cfg.l_g == 1
    assert cfg.ks == (20, 50)
    assert cfg.coarse_rate == 0.2
    assert cfg.fine_rate == 0.3
    assert cfg.beta == 1.0
    assert cfg.split == (0.7, 0.1, 0.2)


def test_file_overrides_defaults(tmp_path):
    path = write(tmp_path, """
[model]
mode = "HHGR"
d = 16

[train]
batch_size = 32

[eval]
ks = [5, 10]
""")
    cfg = load_config(path)
    assert cfg.mode == "HHGR"
    assert cfg.d == 16
    assert cfg.batch_size == 32
    assert cfg.ks == (5, 10)
    assert cfg.lr_main == 1e-4          # untouched default


def test_flag_overrides_beat_file(tmp_path):
    path = write(tmp_path, "[model]\nd = 16\n")
    cfg = load_config(path, overrides={"d": 32, "seed": 9, "mode": None})
    assert cfg.d == 32
    assert cfg.seed == 9
    assert cfg.mode == "S2"             # None means "not given"


def test_unknown_section_rejected(tmp_path):
    path = write(tmp_path, "[modle]\nd = 16\n")
    with pytest.raises(ConfigError, match="modle"):
        load_config(path)


def test_unknown_key_rejected(tmp_path):
    path = write(tmp_path, "[model]\ndd = 16\n")
    with pytest.raises(ConfigError, match="model.dd"):
        load_config(path)


def test_unknown_override_rejected():
    with pytest.raises(ConfigError, match="emb_dim"):
        load_config(None, overrides={"emb_dim": 8})


def test_toml_syntax_error(tmp_path):
    path = write(tmp_path, "[model\nd = 16\n")
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("field,value", [
    ("mode", "GRU"), ("d", 0), ("batch_size", 0), ("n_neg", 0),
    ("l_g", -1), ("patience", -2), ("lr_main", 0.0), ("lr_pretrain", -1e-4),
    ("coarse_rate", 1.0), ("fine_rate", -0.1), ("beta", -0.5),
    ("ks", []), ("ks", [0, 5]), ("recall_denominator", "max"),
    ("split", (0.5, 0.5)), ("split", (0.8, 0.1, 0.2)),
])
def test_invalid_values_rejected(field, value):
    with pytest.raises(ConfigError):
        load_config(None, overrides={field: value})


def test_validation_coerces_types():
    cfg = load_config(None, overrides={"d": 16.0, "ks": [5.0, 10],
                                       "split": [0.8, 0.1, 0.1]})
    assert cfg.d == 16 and isinstance(cfg.d, int)
    assert cfg.ks == (5, 10)
    assert cfg.split == (0.8, 0.1, 0.1)


def test_echo_round_trip(tmp_path):
    cfg = load_config(None, overrides={
        "mode": "HHGR-C", "d": 8, "seed": 42, "ks": [5],
        "coarse_rate": 0.25, "run_name": 'with "quotes"',
        "user_item": str(tmp_path / "ui.tsv")})
    echoed = tmp_path / "config.echo"
    echo_config(cfg, echoed)
    again = load_config(echoed)
    assert again == cfg


def test_echo_skips_unset_paths(tmp_path):
    echoed = tmp_path / "config.echo"
    echo_config(load_config(), echoed)
    text = echoed.read_text()
    assert "user_item" not in text
    assert "[output]" in text
    again = load_config(echoed)
    assert again == load_config()


def test_config_meta_fields():
    meta = config_meta(load_config(None, overrides={"mode": "HHGR", "seed": 7}))
    assert meta["mode"] == "HHGR"
    assert meta["seed"] == 7
    assert meta["split"] == [0.7, 0.1, 0.2]
    assert meta["ks"] == [20, 50]
    assert set(meta) == {"mode", "d", "l_u", "l_g", "seed", "beta",
                         "coarse_rate", "fine_rate", "split", "ks",
                         "recall_denominator"}

"""Run configuration: defaults, TOML files, and flag overrides.

Precedence: built-in defaults < config file < command-line flags.  The
HHGR_SEED environment variable (applied by the CLI) beats all of them.
Unknown sections or keys are rejected rather than ignored.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ImportError:                      # 3.10
    import tomli as tomllib

from .errors import ConfigError
from .model import MODES


@dataclass
class RunConfig:
    # model
    mode: str = "S2"
    d: int = 64
    l_u: int = 2
    l_g: int = 1
    # train
    lr_pretrain: float = 5e-4
    lr_main: float = 1e-4
    batch_size: int = 512
    n_neg: int = 10
    epochs_pretrain: int = 20
    epochs_main: int = 100
    patience: int = 10
    seed: int = 0
    # ssl
    coarse_rate: float = 0.2
    fine_rate: float = 0.3
    beta: float = 1.0
    # eval
    ks: tuple = (20, 50)
    recall_denominator: str = "min"
    num_buckets: int = 4
    # data
    user_item: str = None
    group_item: str = None
    membership: str = None
    split: tuple = (0.7, 0.1, 0.2)
    # output
    out_dir: str = "out"
    run_name: str = "run"


# section -> {toml key -> RunConfig field}
_SCHEMA = {
    "model": {"mode": "mode", "d": "d", "l_u": "l_u", "l_g": "l_g"},
    "train": {"lr_pretrain": "lr_pretrain", "lr_main": "lr_main",
              "batch_size": "batch_size", "n_neg": "n_neg",
              "epochs_pretrain": "epochs_pretrain", "epochs_main": "epochs_main",
              "patience": "patience", "seed": "seed"},
    "ssl": {"coarse_rate": "coarse_rate", "fine_rate": "fine_rate",
            "beta": "beta"},
    "eval": {"ks": "ks", "recall_denominator": "recall_denominator",
             "num_buckets": "num_buckets"},
    "data": {"user_item": "user_item", "group_item": "group_item",
             "membership": "membership", "split": "split"},
    "output": {"dir": "out_dir", "run_name": "run_name"},
}


def load_config(path=None, overrides=None):
    """Build a validated RunConfig from an optional TOML file plus overrides."""
    cfg = RunConfig()
    if path is not None:
        with open(path, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f"{path}: {e}") from None
        for section, table in doc.items():
            if section not in _SCHEMA:
                raise ConfigError(f"{path}: unknown section [{section}]")
            if not isinstance(table, dict):
                raise ConfigError(f"{path}: [{section}] must be a table")
            for key, value in table.items():
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"{path}: unknown key {section}.{key}")
                setattr(cfg, _SCHEMA[section][key], value)
    if overrides:
        fields = {f.name for f in dataclasses.fields(RunConfig)}
        for key, value in overrides.items():
            if key not in fields:
                raise ConfigError(f"unknown config field {key!r}")
            if value is not None:
                setattr(cfg, key, value)
    return validate_config(cfg)


def validate_config(cfg):
    def fail(msg):
        raise ConfigError(msg)

    if cfg.mode not in MODES:
        fail(f"mode must be one of {', '.join(MODES)}, got {cfg.mode!r}")
    for name in ("d", "l_u", "batch_size", "n_neg"):
        if int(getattr(cfg, name)) < 1:
            fail(f"{name} must be >= 1, got {getattr(cfg, name)}")
        setattr(cfg, name, int(getattr(cfg, name)))
    for name in ("l_g", "epochs_pretrain", "epochs_main", "patience",
                 "num_buckets"):
        if int(getattr(cfg, name)) < 0:
            fail(f"{name} must be >= 0, got {getattr(cfg, name)}")
        setattr(cfg, name, int(getattr(cfg, name)))
    cfg.seed = int(cfg.seed)
    for name in ("lr_pretrain", "lr_main"):
        if not float(getattr(cfg, name)) > 0:
            fail(f"{name} must be > 0")
        setattr(cfg, name, float(getattr(cfg, name)))
    for name in ("coarse_rate", "fine_rate"):
        rate = float(getattr(cfg, name))
        if not 0.0 <= rate < 1.0:
            fail(f"{name} must be in [0, 1), got {rate}")
        setattr(cfg, name, rate)
    cfg.beta = float(cfg.beta)
    if cfg.beta < 0:
        fail(f"beta must be >= 0, got {cfg.beta}")
    try:
        cfg.ks = tuple(int(k) for k in cfg.ks)
    except TypeError:
        fail(f"ks must be a list of integers, got {cfg.ks!r}")
    if not cfg.ks or min(cfg.ks) < 1:
        fail(f"ks must be positive integers, got {cfg.ks}")
    if cfg.recall_denominator not in ("min", "full"):
        fail(f"recall_denominator must be 'min' or 'full', "
             f"got {cfg.recall_denominator!r}")
    split = tuple(float(r) for r in cfg.split)
    if len(split) != 3 or min(split) <= 0 or abs(sum(split) - 1.0) > 1e-9:
        fail(f"split must be three positive ratios summing to 1, got {split}")
    cfg.split = split
    return cfg


def _toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {value!r}")


def echo_config(cfg, path):
    """Write the effective config as TOML that load_config can read back."""
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, attr in keys.items():
            value = getattr(cfg, attr)
            if value is None:
                continue
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def config_meta(cfg):
    """The sidecar dict stored next to a checkpoint."""
    return {
        "mode": cfg.mode, "d": cfg.d, "l_u": cfg.l_u, "l_g": cfg.l_g,
        "seed": cfg.seed, "beta": cfg.beta,
        "coarse_rate": cfg.coarse_rate, "fine_rate": cfg.fine_rate,
        "split": list(cfg.split), "ks": list(cfg.ks),
        "recall_denominator": cfg.recall_denominator,
    }

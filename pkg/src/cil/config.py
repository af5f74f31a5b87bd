"""INI run configuration: schema-validated sections, dotted overrides."""

from __future__ import annotations

import configparser
import io
from pathlib import Path

from .constraints import ConstraintSet  # noqa: F401 (re-export convenience)
from .core import CorrectionConfig
from .data import DatasetConfig
from .dwa import DwaConfig
from .network import NetConfig
from .world import WorldConfig

_bool = lambda s: {"true": True, "false": False}[str(s).lower()]

# section -> key -> (parser, default)
SCHEMA = {
    "data": {
        "episodes": (int, 200),
        "test_worlds": (int, 20),
        "horizon": (int, 10),
        "image_size": (int, 64),
        "resolution": (float, 5.0),
        "seed": (int, 0),
    },
    "world": {
        "size": (float, 30.0),
        "dt": (float, 0.3),
        "timeout": (float, 60.0),
        "n_obstacles_min": (int, 4),
        "n_obstacles_max": (int, 12),
        "robot_radius": (float, 1.0),
    },
    "network": {
        "hidden": (int, 200),
    },
    "train": {
        "epochs": (int, 4),
        "batch_size": (int, 128),
        "learning_rate": (float, 1e-3),
        "lam_g": (float, 0.5),
        "lam_h": (float, 0.5),
        "seed": (int, 0),
    },
    "correction": {
        "gamma": (float, 1e-3),
        "n_grad": (int, 5),
        "mode": (str, "linearized"),
    },
}


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return {sec: {k: d for k, (_, d) in keys.items()}
            for sec, keys in SCHEMA.items()}


def _parse_value(section, key, raw):
    if section not in SCHEMA:
        raise ConfigError("unknown config section %r" % section)
    if key not in SCHEMA[section]:
        raise ConfigError("unknown config key %s.%s" % (section, key))
    parser = SCHEMA[section][key][0]
    try:
        return parser(raw)
    except (ValueError, KeyError):
        raise ConfigError("bad value for %s.%s: %r" % (section, key, raw))


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the INI file, then dotted-key overrides."""
    cfg = default_config()
    if path is not None:
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise ConfigError("config file not found: %s" % path)
        for section in cp.sections():
            for key, raw in cp.items(section):
                cfg.setdefault(section, {})
                cfg[section][key] = _parse_value(section, key, raw)
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError("override must look like section.key=value: %r"
                              % ov)
        dotted, raw = ov.split("=", 1)
        if dotted.count(".") != 1:
            raise ConfigError("override key must be section.key: %r" % dotted)
        section, key = dotted.split(".")
        cfg[section][key] = _parse_value(section, key, raw)
    return cfg


def config_to_ini(cfg: dict) -> str:
    cp = configparser.ConfigParser()
    for section in SCHEMA:
        cp[section] = {k: repr(v) if isinstance(v, float) else str(v)
                       for k, v in cfg[section].items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def write_snapshot(cfg: dict, out_dir) -> Path:
    path = Path(out_dir) / "config_resolved.ini"
    path.write_text(config_to_ini(cfg))
    return path


# -- dataclass builders ------------------------------------------------------

def world_config(cfg) -> WorldConfig:
    w = cfg["world"]
    return WorldConfig(size=w["size"], dt=w["dt"], timeout=w["timeout"],
                       n_obstacles=(w["n_obstacles_min"],
                                    w["n_obstacles_max"]),
                       robot_radius=w["robot_radius"])


def dataset_config(cfg) -> DatasetConfig:
    d = cfg["data"]
    return DatasetConfig(episodes=d["episodes"], test_worlds=d["test_worlds"],
                         horizon=d["horizon"], image_size=d["image_size"],
                         resolution=d["resolution"], seed=d["seed"],
                         world=world_config(cfg), dwa=DwaConfig())


def net_config(cfg) -> NetConfig:
    return NetConfig(image_size=cfg["data"]["image_size"],
                     resolution=cfg["data"]["resolution"],
                     horizon=cfg["data"]["horizon"],
                     hidden_size=cfg["network"]["hidden"],
                     dt=cfg["world"]["dt"])


def correction_config(cfg) -> CorrectionConfig:
    c = cfg["correction"]
    return CorrectionConfig(gamma=c["gamma"], n_grad=c["n_grad"],
                            mode=c["mode"])


def train_config(cfg):
    from .baselines import TrainConfig
    t = cfg["train"]
    return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"],
                       learning_rate=t["learning_rate"], seed=t["seed"],
                       lam_g=t["lam_g"], lam_h=t["lam_h"],
                       correction=correction_config(cfg))

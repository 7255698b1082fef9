"""Typed configuration registry shared by the config file and the CLI.

Every tunable lives in one table: section, key, type, default and a doc
string.  INI files supply a middle layer between built-in defaults and
command-line flags, and unknown sections or keys are rejected rather
than ignored so typos fail loudly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Callable

from .models import NetworkConfig
from .training import TrainConfig


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_k_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValueError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise ValueError("k list is empty")
    return values


def _parse_center(text: str):
    if text.strip() == "auto":
        return None
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"center must be 'auto' or 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_region(text: str):
    if text.strip() == "full":
        return None
    return float(text)


@dataclass(frozen=True)
class ConfigKey:
    section: str
    name: str
    default: str
    parse: Callable[[str], object]
    doc: str

    @property
    def path(self) -> str:
        return f"{self.section}.{self.name}"


KEYS: tuple[ConfigKey, ...] = (
    ConfigKey("warp", "k", "1.0", float,
              "radial scaling factor; <1 bulges outward, >1 pinches inward"),
    ConfigKey("warp", "center", "auto", _parse_center,
              "effect center as 'x,y' pixels, or 'auto' for the image center"),
    ConfigKey("warp", "region", "full", _parse_region,
              "radius of the affected disk in pixels, or 'full'"),
    ConfigKey("train", "lambda_adv", "0.001", float,
              "trade-off weight on the adversarial loss term"),
    ConfigKey("train", "learning_rate", "0.01", float,
              "SGD learning rate"),
    ConfigKey("train", "momentum", "0.9", float,
              "SGD momentum coefficient"),
    ConfigKey("train", "pretrain_epochs", "10", int,
              "content-loss-only warm-up epochs before adversarial training"),
    ConfigKey("train", "epochs", "30", int,
              "adversarial training epochs after the warm-up"),
    ConfigKey("train", "batch_size", "8", int,
              "images per training batch"),
    ConfigKey("train", "seed", "0", int,
              "master seed for init, shuffling and stage seeds"),
    ConfigKey("train", "d_steps_per_g_step", "1", int,
              "discriminator updates per generator update"),
    ConfigKey("train", "optimizer", "sgd", str,
              "optimizer name (sgd)"),
    ConfigKey("train", "mse_weight", "1.0", float,
              "weight on the content loss; 0 trains on the adversarial term only"),
    ConfigKey("model", "input_channels", "3", int,
              "image channels the networks expect"),
    ConfigKey("model", "base_channels", "64", int,
              "width of the first stage; later stages scale from it"),
    ConfigKey("model", "image_size", "224", int,
              "square training resolution; must divide by 16"),
    ConfigKey("data", "ks", "0.5,0.8,1.5,2.7", _parse_k_list,
              "distortion strengths used for dataset generation"),
    ConfigKey("data", "size", "224", int,
              "square size source images are resized to"),
    ConfigKey("data", "test_frac", "0.02", float,
              "fraction of source images held out for the test split"),
    ConfigKey("data", "seed", "0", int,
              "seed for per-image k choice and the split assignment"),
    ConfigKey("data", "all_k", "false", _parse_bool,
              "distort every source with every k instead of one random k"),
)

_BY_PATH = {key.path: key for key in KEYS}
_SECTIONS = {key.section for key in KEYS}


def defaults() -> dict[str, object]:
    return {key.path: key.parse(key.default) for key in KEYS}


def parse_file(path) -> dict[str, object]:
    """Read one INI layer; only known sections/keys are admitted."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ValueError(f"cannot parse config {path}: {exc}") from exc
    values: dict[str, object] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}] in {path}")
        for name, raw in parser.items(section):
            key = _BY_PATH.get(f"{section}.{name}")
            if key is None:
                raise ValueError(f"unknown config key {section}.{name} in {path}")
            try:
                values[key.path] = key.parse(raw)
            except ValueError as exc:
                raise ValueError(
                    f"bad value for {section}.{name} in {path}: {exc}") from exc
    return values


def merge(*layers: dict[str, object]) -> dict[str, object]:
    """Later layers win; all keys must belong to the registry."""
    out = defaults()
    for layer in layers:
        for path, value in layer.items():
            if path not in _BY_PATH:
                raise ValueError(f"unknown config key {path}")
            out[path] = value
    return out


def parse_override(path: str, raw: str) -> object:
    key = _BY_PATH.get(path)
    if key is None:
        raise ValueError(f"unknown config key {path}")
    return key.parse(raw)


def key_table() -> str:
    """One aligned line per key: path, default, doc."""
    width = max(len(k.path) for k in KEYS)
    dwidth = max(len(k.default) for k in KEYS)
    lines = [f"{k.path.ljust(width)}  {k.default.ljust(dwidth)}  {k.doc}"
             for k in KEYS]
    return "\n".join(lines) + "\n"


def train_config_from(cfg: dict[str, object]) -> TrainConfig:
    return TrainConfig(
        lambda_adv=cfg["train.lambda_adv"],
        learning_rate=cfg["train.learning_rate"],
        momentum=cfg["train.momentum"],
        pretrain_epochs=cfg["train.pretrain_epochs"],
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        seed=cfg["train.seed"],
        d_steps_per_g_step=cfg["train.d_steps_per_g_step"],
        optimizer=cfg["train.optimizer"],
        mse_weight=cfg["train.mse_weight"],
    )


def network_config_from(cfg: dict[str, object]) -> NetworkConfig:
    size = cfg["model.image_size"]
    return NetworkConfig(
        input_channels=cfg["model.input_channels"],
        base_channels=cfg["model.base_channels"],
        image_size=(size, size),
    )

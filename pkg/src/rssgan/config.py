"""Run configuration: a versioned YAML file plus ``key.path=value`` overrides.

Schema (version 1); every key is optional and falls back to :data:`DEFAULTS`::

    version: 1
    dataset:    {path, url, sha256}
    output_dir: runs
    seed:       0
    workers:    0            # 0 = number of logical cores
    classifier: {hidden, hidden_activation, epochs, batch_size, lr, beta1, beta2, eps}
    gan:        {latent_dim, generator_hidden, discriminator_hidden, leaky_alpha,
                 disc_steps, iterations, batch_size, g_lr, d_lr, beta1, beta2, eps, loss}
    experiment: {repetitions, full_repetitions, interpretation,
                 table1_fractions, table1_synthetic, sweep_step}
"""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .classifier import ClassifierConfig
from .data import DATA_FILENAME, UCI_URL, cache_dir
from .gan import GanConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


def _fields(cls) -> dict:
    d = cls().to_dict()
    d.pop("seed")
    return d


DEFAULTS: dict = {
    "version": CONFIG_VERSION,
    "dataset": {"path": None, "url": UCI_URL, "sha256": None},
    "output_dir": "runs",
    "seed": 0,
    "workers": 0,
    "classifier": _fields(ClassifierConfig),
    "gan": _fields(GanConfig),
    "experiment": {
        "repetitions": 20,
        "full_repetitions": 100,
        "interpretation": "totals",
        "table1_fractions": [0.10, 1.00],
        "table1_synthetic": [0, 250, 500, 750, 1000],
        "sweep_step": 0.05,
    },
}


def _merge(base: dict, update: dict, where: str = "") -> dict:
    for key, value in update.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a mapping")
            _merge(base[key], value, path + ".")
        else:
            base[key] = value
    return base


def parse_override(item: str) -> dict:
    """``"gan.iterations=500"`` -> ``{"gan": {"iterations": 500}}`` (value parsed as YAML)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    value = yaml.safe_load(raw) if raw else None
    for part in reversed(key.strip().split(".")):
        value = {part: value}
    return value


@dataclass
class RunConfig:
    raw: dict

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def workers(self) -> int:
        w = int(self.raw["workers"])
        return w if w > 0 else (os.cpu_count() or 1)

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    @property
    def dataset_path(self) -> Path:
        path = self.raw["dataset"]["path"]
        return Path(path) if path else cache_dir() / DATA_FILENAME

    @property
    def dataset_url(self) -> str:
        return self.raw["dataset"]["url"]

    @property
    def dataset_sha256(self) -> str | None:
        return self.raw["dataset"]["sha256"]

    @property
    def experiment(self) -> dict:
        return self.raw["experiment"]

    def classifier_config(self, seed: int | None = None) -> ClassifierConfig:
        return ClassifierConfig(**self.raw["classifier"], seed=self.seed if seed is None else seed)

    def gan_config(self, seed: int | None = None) -> GanConfig:
        return GanConfig(**self.raw["gan"], seed=self.seed if seed is None else seed)


def load_config(path: str | Path | None = None, overrides: list[str] | tuple = ()) -> RunConfig:
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        if doc.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ConfigError(f"{path}: unsupported config version {doc.get('version')}")
        _merge(raw, doc)
    for item in overrides:
        _merge(raw, parse_override(item))
    cfg = RunConfig(raw)
    try:
        cfg.classifier_config()
        cfg.gan_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.experiment["interpretation"] not in ("totals", "per_class"):
        raise ConfigError("experiment.interpretation must be 'totals' or 'per_class'")
    return cfg


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.raw, sort_keys=False)

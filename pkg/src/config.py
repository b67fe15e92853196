#!/usr/bin/env python3
"""
Run configuration: built-in defaults < `key = value` config file < environment < CLI flags.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Mapping
from dataclasses import asdict, dataclass, fields, replace

from dotenv import dotenv_values

from .augment import AugmentKind, AugmentPool
from .encoder import EncoderConfig
from .evaluation import ProbeConfig
from .losses import LossKind, LossParams
from .trainer import TrainConfig
from .tudataset import DEFAULT_BASE_URL, TuSourceConfig

logger = logging.getLogger(__name__)

ENV_TU_URL = "GRAPHSSL_TU_URL"
ENV_DATA_ROOT = "GRAPHSSL_DATA_ROOT"
DEFAULT_DATA_ROOT = "data"

# Config-file keys that locate the corpus rather than describe the run
SOURCE_KEYS = ("data_root", "tu_url")
METADATA_PREFIX = "run."


class ConfigError(ValueError):
    """Malformed config file or setting value."""


def _normalize_key(key: str) -> str:
    key = key.strip().lower().replace("-", "_")
    return "lambda_" if key == "lambda" else key


def _coerce(kind: type, value: object, key: str):
    try:
        if kind is int:
            number = float(value) if isinstance(value, str) else value
            if float(number) != int(number):
                raise ValueError
            return int(number)
        return kind(value)
    except (TypeError, ValueError):
        msg = f"setting {key!r} expects {kind.__name__}, got {value!r}"
        raise ConfigError(msg) from None


@dataclass(frozen=True)
class RunSettings:
    """Every knob of one pre-train + evaluate run."""

    dataset: str = "MUTAG"
    loss: str = LossKind.VICREG_HSIC.value
    aug_a: str = AugmentKind.NODE_DROP.value
    aug_b: str = AugmentKind.SUBGRAPH.value
    ratio: float = 0.2
    batch_size: int = 128
    projector_dim: int = 160
    hidden_dim: int = 32
    num_layers: int = 3
    lambda_: float = 25.0
    mu: float = 25.0
    nu: float = 1.0
    gamma: float = 1.0
    epsilon: float = 1e-4
    p: float = 2.0
    temperature: float = 0.5
    lambda_bt: float = 5e-3
    epochs: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    folds: int = 10
    repeats: int = 5
    probe_epochs: int = 200
    probe_lr: float = 0.01
    probe_l2: float = 1e-3

    def __post_init__(self):
        try:
            object.__setattr__(self, "loss", LossKind.parse(str(self.loss)).value)
            object.__setattr__(self, "aug_a", AugmentKind.parse(str(self.aug_a)).value)
            object.__setattr__(self, "aug_b", AugmentKind.parse(str(self.aug_b)).value)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not 0 <= self.ratio < 1:
            msg = f"ratio must lie in [0, 1), got {self.ratio}"
            raise ConfigError(msg)
        if not self.dataset:
            msg = "dataset must be set"
            raise ConfigError(msg)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_mapping(cls, values: Mapping[str, object], base: RunSettings | None = None) -> RunSettings:
        """Apply string or typed values onto `base` (defaults when omitted), coercing by field type."""
        base = base or cls()
        known = {f.name: type(getattr(base, f.name)) for f in fields(cls)}
        updates: dict[str, object] = {}
        for raw_key, raw_value in values.items():
            key = _normalize_key(raw_key)
            if key not in known:
                msg = f"unknown setting {raw_key!r}"
                raise ConfigError(msg)
            if raw_value is None:
                continue
            updates[key] = _coerce(known[key], raw_value, raw_key)
        return replace(base, **updates)

    def overrides(self, **values) -> RunSettings:
        """Flag overrides; None means "not given"."""
        return RunSettings.from_mapping({k: v for k, v in values.items() if v is not None}, base=self)

    def get(self, key: str):
        return getattr(self, _normalize_key(key))

    @property
    def pool(self) -> AugmentPool:
        return AugmentPool.from_kinds([self.aug_a, self.aug_b], self.ratio)

    def loss_params(self) -> LossParams:
        return LossParams(
            lambda_=self.lambda_,
            mu=self.mu,
            nu=self.nu,
            gamma=self.gamma,
            epsilon=self.epsilon,
            p=self.p,
            temperature=self.temperature,
            lambda_bt=self.lambda_bt,
        )

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(num_layers=self.num_layers, hidden_dim=self.hidden_dim, projector_dim=self.projector_dim)

    def to_train_config(self, prefetch: bool = True) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            loss=LossKind(self.loss),
            loss_params=self.loss_params(),
            pool=self.pool,
            encoder=self.encoder_config(),
            prefetch=prefetch,
        )

    def to_probe_config(self, workers: int = 1) -> ProbeConfig:
        return ProbeConfig(
            folds=self.folds,
            repeats=self.repeats,
            epochs=self.probe_epochs,
            learning_rate=self.probe_lr,
            l2_penalty=self.probe_l2,
            seed=self.seed,
            workers=workers,
        )

    def to_metadata(self) -> dict[str, str]:
        """Checkpoint metadata entries (`run.<key>`), readable by `from_metadata`."""
        return {
            f"{METADATA_PREFIX}{key}": repr(value) if isinstance(value, float) else str(value)
            for key, value in asdict(self).items()
        }

    @classmethod
    def from_metadata(cls, meta: Mapping[str, str]) -> RunSettings:
        values = {key[len(METADATA_PREFIX) :]: value for key, value in meta.items() if key.startswith(METADATA_PREFIX)}
        if not values:
            msg = "checkpoint carries no run settings"
            raise ConfigError(msg)
        return cls.from_mapping(values)


def load_config_file(path: str) -> dict[str, str]:
    """
    Parse a flat `key = value` file.

    Raises:
        ConfigError: missing file, key without a value, or unknown key
    """
    if not os.path.isfile(path):
        msg = f"config file not found: {path}"
        raise ConfigError(msg)
    raw = dotenv_values(path)
    values: dict[str, str] = {}
    allowed = set(RunSettings.field_names()) | set(SOURCE_KEYS)
    for key, value in raw.items():
        if value is None or not value.strip():
            msg = f"malformed config {path}: {key!r} has no value"
            raise ConfigError(msg)
        if _normalize_key(key) not in allowed:
            msg = f"malformed config {path}: unknown key {key!r}"
            raise ConfigError(msg)
        values[_normalize_key(key)] = value.strip()
    logger.debug(f"Loaded {len(values)} setting(s) from {path}")
    return values


def resolve_settings(config_path: str | None = None, **flags) -> tuple[RunSettings, dict[str, str]]:
    """
    Defaults, then the config file, then flags (None = not given).

    Returns:
        (settings, source entries from the file: data_root / tu_url)
    """
    file_values = load_config_file(config_path) if config_path else {}
    source = {k: v for k, v in file_values.items() if k in SOURCE_KEYS}
    run_values = {k: v for k, v in file_values.items() if k not in SOURCE_KEYS}
    settings = RunSettings.from_mapping(run_values).overrides(**flags)
    return settings, source


def source_config(
    dataset: str, file_source: Mapping[str, str] | None = None, data_root: str | None = None
) -> TuSourceConfig:
    """Corpus location: file values, overridden by GRAPHSSL_* environment, overridden by the flag."""
    file_source = file_source or {}
    root = data_root or os.environ.get(ENV_DATA_ROOT) or file_source.get("data_root") or DEFAULT_DATA_ROOT
    base_url = os.environ.get(ENV_TU_URL) or file_source.get("tu_url") or DEFAULT_BASE_URL
    return TuSourceConfig(root_dir=root, dataset_name=dataset, base_url=base_url)

"""Run configuration: flat ``key = value`` TOML files with training-setup defaults."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

import tomli

from .data import SCENES, T_OBS, T_PRED, ConfigError
from .encoder import EncoderConfig
from .model import ModelConfig
from .patterns import PatternConfig
from .trainer import TrainConfig

COMMANDS = ("ingest", "train", "eval", "sample", "classify")
DATA_ROOT_ENV = "DUALCVAE_DATA_ROOT"


@dataclass
class RunConfig:
    command: str = "train"
    data_root: str = "data"
    held_out_scene: str = "ZARA1"
    output_dir: str = "runs/default"
    checkpoint: str = ""
    seed: int = 0
    k: int = 20
    validation_fraction: float = 0.1
    train_fraction: float = 1.0
    stride: int = 1
    t_obs: int = T_OBS
    t_pred: int = T_PRED
    eval_scenes: str = "held_out"
    per_pedestrian_min: bool = False
    sample_windows: int = 5
    census_exemplars: int = 5
    # training setup
    batch_size: int = 128
    epochs: int = 60
    lr_initial: float = 1e-3
    lr_after: float = 1e-4
    lr_switch_epoch: int = 30
    weight_decay: float = 0.1
    dropout_rate: float = 0.2
    num_patterns: int = 4
    temperature: float = 0.1
    lambda_z: float = 0.005
    lambda_c: float = 0.005
    grad_clip: float = 10.0
    # architecture
    embed_dim: int = 64
    num_heads: int = 4
    head_dim: int = 16
    lstm_hidden: int = 64
    z_dim: int = 16
    context_dim: int = 16
    hard_sample_at_test: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if self.held_out_scene not in SCENES:
            raise ConfigError(f"held_out_scene must be one of {SCENES}, got {self.held_out_scene!r}")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must be in [0, 1)")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError("train_fraction must be in (0, 1]")
        if self.stride < 1 or self.t_obs < 1 or self.t_pred < 1:
            raise ConfigError("stride, t_obs and t_pred must be positive")
        if self.eval_scenes not in ("held_out", "all"):
            raise ConfigError("eval_scenes must be 'held_out' or 'all'")
        if self.z_dim < 1:
            raise ConfigError("z_dim must be positive")
        # building the component configs runs their own range checks
        try:
            self.train_config()
            self.model_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(eval_k=self.k, **{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def model_config(self) -> ModelConfig:
        enc = EncoderConfig(self.embed_dim, self.num_heads, self.head_dim, self.lstm_hidden,
                            dropout_rate=self.dropout_rate)
        pat = PatternConfig(self.num_patterns, self.temperature, self.hard_sample_at_test,
                            context_dim=self.context_dim)
        return ModelConfig(encoder=enc, patterns=pat, z_dim=self.z_dim)

    def to_toml(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            text = ("true" if value else "false") if isinstance(value, bool) else json.dumps(value) \
                if isinstance(value, str) else repr(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, value, kind):
    target = {"int": int, "float": float, "bool": bool, "str": str}[kind if isinstance(kind, str) else kind.__name__]
    if target is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"{name}: expected true/false, got {value!r}")
    if target is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    try:
        return target(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r} as {target.__name__}") from None


def resolve(file_values: dict | None = None, overrides: dict | None = None,
            env: dict | None = None) -> RunConfig:
    """Defaults < config file < environment (data root only) < explicit overrides."""
    known = {f.name: f.type for f in fields(RunConfig)}
    merged: dict = {}
    env = os.environ if env is None else env
    layers = [file_values or {}]
    if env.get(DATA_ROOT_ENV):
        layers.append({"data_root": env[DATA_ROOT_ENV]})
    layers.append(overrides or {})
    for layer in layers:
        for key, value in layer.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value, known[key])
    return RunConfig(**merged)


def read_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        values = tomli.loads(raw)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    nested = [k for k, v in values.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: tables are not supported ({nested})")
    return values


def load_config(path: str | Path, overrides: dict | None = None, env: dict | None = None) -> RunConfig:
    return resolve(read_config_file(path), overrides, env)

"""Adam optimisation loop, learning-rate schedule and checkpointing."""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .batch import SceneBatch, chunk_windows
from .checkpoint import Checkpoint
from .data import ConfigError, DatasetSplit, SceneWindow
from .encoder import EncoderConfig
from .evaluation import evaluate
from .model import ModelConfig, SocialDualCVAE, Streams
from .objective import LossWeights
from .patterns import PatternConfig
from .rng import get_state, set_state, substream

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 60
    lr_initial: float = 1e-3
    lr_after: float = 1e-4
    lr_switch_epoch: int = 30
    weight_decay: float = 0.1
    dropout_rate: float = 0.2
    seed: int = 0
    num_patterns: int = 4
    temperature: float = 0.1
    lambda_z: float = 0.005
    lambda_c: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    grad_clip: float = 10.0
    eval_k: int = 20
    max_pairs_per_chunk: int = 4096

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if self.lr_initial <= 0 or self.lr_after <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0 <= self.lr_switch_epoch <= self.epochs:
            raise ConfigError(f"lr_switch_epoch must be in [0, epochs], got {self.lr_switch_epoch}")
        if self.weight_decay < 0 or self.grad_clip <= 0:
            raise ConfigError("weight_decay must be >= 0 and grad_clip > 0")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.num_patterns < 1 or self.eval_k < 1:
            raise ConfigError("num_patterns and eval_k must be positive")
        LossWeights(self.lambda_z, self.lambda_c)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_z, self.lambda_c)


def model_config(cfg: TrainConfig, encoder: EncoderConfig | None = None,
                 patterns: PatternConfig | None = None) -> ModelConfig:
    enc = dataclasses.replace(encoder or EncoderConfig(), dropout_rate=cfg.dropout_rate)
    pat = dataclasses.replace(patterns or PatternConfig(), num_patterns=cfg.num_patterns,
                              temperature=cfg.temperature)
    return ModelConfig(encoder=enc, patterns=pat)


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    return cfg.lr_initial if epoch < cfg.lr_switch_epoch else cfg.lr_after


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps_hat: float = 1e-8,
              weight_decay: float = 0.0) -> None:
    """In-place Adam update with decoupled weight decay ``-lr * weight_decay * param``."""
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps_hat)
        if weight_decay:
            update = update + lr * weight_decay * p
        p -= update


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


@dataclass
class TrainStreams:
    shuffle: np.random.Generator
    gumbel: np.random.Generator
    epsilon: np.random.Generator
    dropout: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> TrainStreams:
        return cls(*(substream(seed, name) for name in ("shuffle", "gumbel", "epsilon", "dropout")))

    def states(self) -> dict:
        return {k: get_state(getattr(self, k)) for k in ("shuffle", "gumbel", "epsilon", "dropout")}

    def restore(self, states: dict) -> None:
        for k, s in states.items():
            set_state(getattr(self, k), s)


class Trainer:
    """Holds model, optimizer and random streams so training can stop and resume exactly."""

    def __init__(self, cfg: TrainConfig, model_cfg: ModelConfig | None = None):
        self.cfg = cfg
        self.model_cfg = model_cfg or model_config(cfg)
        self.model = SocialDualCVAE(self.model_cfg, substream(cfg.seed, "init"))
        self.adam = AdamState()
        self.streams = TrainStreams.from_seed(cfg.seed)
        self.epoch = 0
        self.best_val = float("inf")
        self.best_params: dict[str, np.ndarray] | None = None
        self.dead_parameters: list[str] | None = None
        self._seen_grad: set[str] = set()

    # -- one optimisation step --------------------------------------------------
    def batch_step(self, windows: list[SceneWindow], lr: float) -> dict[str, float]:
        model, cfg = self.model, self.cfg
        model.train()
        model.zero_grad()
        s = self.streams
        streams = Streams(s.gumbel, s.epsilon, s.dropout)
        totals = {"reconstruction": 0.0, "kl_gaussian": 0.0, "kl_categorical": 0.0, "total": 0.0}
        for chunk in chunk_windows(windows, cfg.max_pairs_per_chunk):
            frac = len(chunk) / len(windows)
            parts = model.loss(SceneBatch.from_windows(chunk), cfg.loss_weights, streams)
            T.backward(parts.total * frac)
            for key, val in parts.as_floats().items():
                totals[key] += frac * val
        named = dict(model.named_parameters())
        grads = {n: p.grad for n, p in named.items()}
        if self.dead_parameters is None:
            self._seen_grad.update(n for n, g in grads.items() if np.any(g))
        totals["grad_norm"] = clip_grad_norm(grads, cfg.grad_clip)
        adam_step({n: p.data for n, p in named.items()}, grads, self.adam, lr,
                  cfg.beta1, cfg.beta2, cfg.eps_hat, cfg.weight_decay)
        return totals

    def run_epoch(self, train: list[SceneWindow]) -> dict:
        cfg = self.cfg
        lr = lr_schedule(self.epoch, cfg)
        order = self.streams.shuffle.permutation(len(train))
        sums: dict[str, float] = {}
        for start in range(0, len(order), cfg.batch_size):
            windows = [train[i] for i in order[start:start + cfg.batch_size]]
            stats = self.batch_step(windows, lr)
            for key, val in stats.items():
                sums[key] = sums.get(key, 0.0) + val * len(windows)
        if self.dead_parameters is None:
            self.dead_parameters = [n for n, _ in self.model.named_parameters() if n not in self._seen_grad]
            if self.dead_parameters:
                log.warning("parameters without gradient in epoch 0: %s", self.dead_parameters)
        record = {"epoch": self.epoch, "lr": lr}
        record.update({k: v / len(train) for k, v in sums.items()})
        self.epoch += 1
        return record

    # -- checkpointing -----------------------------------------------------------
    def checkpoint(self) -> Checkpoint:
        optimizer = {f"m/{k}": v for k, v in self.adam.m.items()}
        optimizer.update({f"v/{k}": v for k, v in self.adam.v.items()})
        meta = {"epoch": self.epoch, "adam_step": self.adam.step,
                "train_config": dataclasses.asdict(self.cfg),
                "model_config": dataclasses.asdict(self.model_cfg),
                "rng": self.streams.states(),
                "best_val": None if not np.isfinite(self.best_val) else self.best_val}
        return Checkpoint(self.model.state_dict(), optimizer, meta)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> Trainer:
        meta = ckpt.meta
        trainer = cls(TrainConfig(**meta["train_config"]), model_config_from_dict(meta["model_config"]))
        trainer.model.load_state_dict(ckpt.params)
        for key, arr in ckpt.optimizer.items():
            kind, name = key.split("/", 1)
            getattr(trainer.adam, kind)[name] = arr.copy()
        trainer.adam.step = meta["adam_step"]
        trainer.epoch = meta["epoch"]
        trainer.streams.restore(meta["rng"])
        trainer.dead_parameters = []
        if meta.get("best_val") is not None:
            trainer.best_val = meta["best_val"]
        return trainer


def model_config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    return ModelConfig(encoder=EncoderConfig(**d.pop("encoder")), patterns=PatternConfig(**d.pop("patterns")), **d)


def load_model(path: str | Path) -> SocialDualCVAE:
    """Model with weights from a checkpoint file, in eval mode."""
    ckpt = Checkpoint.load(path)
    model = SocialDualCVAE(model_config_from_dict(ckpt.meta["model_config"]), np.random.default_rng(0))
    model.load_state_dict(ckpt.params)
    return model.eval()


def train(split: DatasetSplit, cfg: TrainConfig, output_dir: str | Path | None = None,
          model_cfg: ModelConfig | None = None, trainer: Trainer | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> tuple[Trainer, list[dict]]:
    """Train to ``cfg.epochs``; per-epoch checkpoints and a JSON-lines metrics log go to ``output_dir``."""
    if not split.train:
        raise ConfigError("training set is empty")
    trainer = trainer or Trainer(cfg, model_cfg)
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if trainer.epoch == 0:
            (out / "metrics.jsonl").write_text("")
    history = []
    while trainer.epoch < cfg.epochs:
        record = trainer.run_epoch(split.train)
        if split.validation:
            rep = evaluate(split.validation, trainer.model, cfg.eval_k, cfg.seed)
            record["val_min_ade"], record["val_min_fde"] = rep.min_ade, rep.min_fde
            if rep.min_ade < trainer.best_val:
                trainer.best_val = rep.min_ade
                trainer.best_params = trainer.model.state_dict()
                if out is not None:
                    trainer.checkpoint().save(out / "best.ckpt")
        else:
            record["val_min_ade"] = record["val_min_fde"] = None
        history.append(record)
        log.info("epoch %d lr %.1e loss %.4f rec %.4f", record["epoch"], record["lr"],
                 record["total"], record["reconstruction"])
        if out is not None:
            with open(out / "metrics.jsonl", "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            ckpt = trainer.checkpoint()
            ckpt.save(out / f"epoch_{record['epoch']:03d}.ckpt")
            ckpt.save(out / "last.ckpt")
        if on_epoch is not None:
            on_epoch(record)
    return trainer, history

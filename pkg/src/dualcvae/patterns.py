"""Unsupervised interaction-pattern classification over ordered pedestrian pairs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .batch import PairIndex
from .nn import MLP, Linear, Module
from .tensor import Tensor

GUMBEL_CLAMP = 1e-12


@dataclass
class PatternConfig:
    num_patterns: int = 4
    temperature: float = 0.1
    hard_sample_at_test: bool = False
    hidden: int = 64
    context_dim: int = 16

    def __post_init__(self):
        if self.num_patterns < 1:
            raise ValueError("num_patterns must be positive")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.hidden < 1 or self.context_dim < 1:
            raise ValueError("hidden and context_dim must be positive")


@dataclass
class PatternDistribution:
    logits: Tensor  # P x H
    probs: Tensor  # P x H


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = np.clip(rng.random(shape), GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP)
    return -np.log(-np.log(u))


def gumbel_softmax(logits, temperature: float, noise: np.ndarray | None = None,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Relaxed categorical sample ``softmax((logits + g) / temperature)``."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    logits = T.as_tensor(logits)
    if noise is None:
        noise = sample_gumbel(logits.shape, rng if rng is not None else np.random.default_rng())
    return T.softmax_lastdim((logits + noise) * (1.0 / temperature))


def hard_sample(logits) -> Tensor:
    """One-hot argmax rows; ties go to the lowest index."""
    data = T.as_tensor(logits).data
    out = np.zeros_like(data)
    if data.size:
        out[np.arange(data.shape[0]), data.argmax(axis=-1)] = 1.0
    return Tensor(out)


class PatternClassifier(Module):
    """MLP over ``Concat(h_i, h_j)`` for every ordered pair; used for both prior and recognition."""

    def __init__(self, feature_dim: int, cfg: PatternConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.mlp = MLP([2 * feature_dim, cfg.hidden, cfg.num_patterns], rng)

    def __call__(self, h_encoder, pairs: PairIndex) -> PatternDistribution:
        h_encoder = T.as_tensor(h_encoder)
        joined = T.concat([T.gather(h_encoder, pairs.src), T.gather(h_encoder, pairs.dst)], axis=1)
        logits = self.mlp(joined)
        return PatternDistribution(logits, T.softmax_lastdim(logits))


class PatternContext(Module):
    """Embed pair samples and average them per pedestrian over its neighbours."""

    def __init__(self, cfg: PatternConfig, rng: np.random.Generator):
        super().__init__()
        self.embed = Linear(cfg.num_patterns, cfg.context_dim, rng)
        self.context_dim = cfg.context_dim

    def __call__(self, samples, pairs: PairIndex) -> Tensor:
        if pairs.num_pairs == 0:
            return Tensor(np.zeros((pairs.num_peds, self.context_dim)))
        counts = np.bincount(pairs.src, minlength=pairs.num_peds).astype(float)
        inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)[:, None]
        return T.segment_sum(self.embed(samples), pairs.src, pairs.num_peds) * inv

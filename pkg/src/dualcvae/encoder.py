"""Per-pedestrian trajectory encoder: self embedding, social attention, LSTM."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .batch import PairIndex
from .data import compute_displacements
from .nn import MLP, Linear, LSTMCell, Module
from .tensor import Tensor


@dataclass
class EncoderConfig:
    embed_dim: int = 64
    num_heads: int = 4
    head_dim: int = 16
    lstm_hidden: int = 64
    pair_hidden: int = 64
    dropout_rate: float = 0.2

    def __post_init__(self):
        for name in ("embed_dim", "num_heads", "head_dim", "lstm_hidden", "pair_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.num_heads * self.head_dim != self.embed_dim:
            raise ValueError(f"num_heads*head_dim ({self.num_heads}*{self.head_dim}) != embed_dim ({self.embed_dim})")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class PairFeatures:
    dist: np.ndarray  # N x N x 2, dist[i, j] = x_j - x_i
    dir: np.ndarray  # N x N x 2, dir[i, j] = v_j - v_i


def pair_features(x: np.ndarray, v: np.ndarray) -> PairFeatures:
    x, v = np.asarray(x, float), np.asarray(v, float)
    return PairFeatures(x[None, :, :] - x[:, None, :], v[None, :, :] - v[:, None, :])


class SocialAttention(Module):
    """Multi-head attention of each pedestrian over its neighbours.

    Keys and values come from ``(h_dist, h_dir, f_lstm(h_lstm_j))`` for each
    neighbour ``j``.  The query of pedestrian ``i`` runs the same feature
    pipeline on its own zero-offset pair ``(i, i)``, so it sees only its own
    recurrent state.
    """

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        d, hid = cfg.embed_dim, cfg.pair_hidden
        self.cfg = cfg
        self.dist_mlp = MLP([2, hid, d], rng, cfg.dropout_rate)
        self.dir_mlp = MLP([2, hid, d], rng, cfg.dropout_rate)
        self.lstm_proj = Linear(cfg.lstm_hidden, d, rng)
        self.query = Linear(3 * d, d, rng)
        self.key = Linear(3 * d, d, rng)
        self.value = Linear(3 * d, d, rng)
        # per-head projections W_l stacked along the output axis
        self.w_q = Linear(d, cfg.num_heads * cfg.head_dim, rng, bias=False)
        self.w_k = Linear(d, cfg.num_heads * cfg.head_dim, rng, bias=False)
        self.w_v = Linear(d, cfg.num_heads * cfg.head_dim, rng, bias=False)
        self.w_o = Linear(cfg.num_heads * cfg.head_dim, d, rng, bias=False)

    def __call__(self, x: np.ndarray, v: np.ndarray, h_lstm, pairs: PairIndex,
                 rng: np.random.Generator | None = None, return_weights: bool = False):
        m, nh, dk = pairs.num_peds, self.cfg.num_heads, self.cfg.head_dim
        src, dst = pairs.src, pairs.dst
        zeros = np.zeros((m, 2))
        proj = self.lstm_proj(h_lstm)
        q_in = T.concat([self.dist_mlp(zeros, rng), self.dir_mlp(zeros, rng), proj], axis=1)
        kv_in = T.concat([self.dist_mlp(x[dst] - x[src], rng), self.dir_mlp(v[dst] - v[src], rng),
                          T.gather(proj, dst)], axis=1)
        q = self.w_q(self.query(q_in)).reshape(m, nh, dk)
        k = self.w_k(self.key(kv_in)).reshape(-1, nh, dk)
        val = self.w_v(self.value(kv_in)).reshape(-1, nh, dk)
        scores = T.sum_(T.gather(q, src) * k, axis=-1) * (1.0 / np.sqrt(dk))  # P x heads
        weights = T.segment_softmax(scores, src, m)
        heads = T.segment_sum(T.reshape(weights, (-1, nh, 1)) * val, src, m)
        out = self.w_o(heads.reshape(m, nh * dk))
        out = T.dropout(out, self.cfg.dropout_rate, self.training, rng)
        return (out, weights) if return_weights else out


class Encoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.self_mlp = MLP([2, cfg.pair_hidden, cfg.embed_dim], rng, cfg.dropout_rate)
        self.social = SocialAttention(cfg, rng)
        self.lstm = LSTMCell(2 * cfg.embed_dim, cfg.lstm_hidden, rng)

    def self_encode(self, v, rng=None) -> Tensor:
        return self.self_mlp(v, rng)

    def temporal_encode(self, h_self, h_social, carry):
        return self.lstm(T.concat([h_self, h_social], axis=1), carry)

    def __call__(self, positions: np.ndarray, pairs: PairIndex | None = None,
                 rng: np.random.Generator | None = None) -> Tensor:
        """Final LSTM hidden state (M x lstm_hidden) for ``positions`` (M x T x 2)."""
        positions = np.asarray(positions, dtype=np.float64)
        m, steps = positions.shape[:2]
        if steps < 1:
            raise ValueError("need at least one timestep")
        pairs = pairs or PairIndex.single(m)
        disp = compute_displacements(positions)
        carry = self.lstm.initial_state(m)
        for t in range(steps):
            x, v = positions[:, t], disp[:, t]
            h_self = self.self_encode(v, rng)
            h_social = self.social(x, v, carry[0], pairs, rng)
            carry = self.temporal_encode(h_self, h_social, carry)
        return carry[0]

"""Gaussian latent intent: prior/recognition heads and reparameterized sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import MLP, Module
from .tensor import Tensor

LOG_VAR_RANGE = (-10.0, 10.0)


@dataclass
class GaussianParams:
    mu: Tensor
    log_var: Tensor

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var.data)


class GaussianHead(Module):
    """``Concat(h_encoder, pattern_context)`` -> tanh MLP trunk -> (mu, clamped log-variance)."""

    def __init__(self, feature_dim: int, context_dim: int, z_dim: int, rng: np.random.Generator,
                 hidden: int = 64):
        super().__init__()
        self.z_dim = z_dim
        self.mlp = MLP([feature_dim + context_dim, hidden, 2 * z_dim], rng)

    def __call__(self, h_encoder, pattern_context) -> GaussianParams:
        out = self.mlp(T.concat([h_encoder, pattern_context], axis=1))
        mu = out[:, :self.z_dim]
        log_var = T.clamp(out[:, self.z_dim:], *LOG_VAR_RANGE)
        return GaussianParams(mu, log_var)


def reparameterize(params: GaussianParams, epsilon: np.ndarray | None = None,
                   rng: np.random.Generator | None = None) -> Tensor:
    """``z = mu + epsilon * exp(log_var / 2)``."""
    if epsilon is None:
        epsilon = (rng if rng is not None else np.random.default_rng()).standard_normal(params.mu.shape)
    return params.mu + T.exp(params.log_var * 0.5) * epsilon

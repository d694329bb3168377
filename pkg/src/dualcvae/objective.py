"""Training objective: displacement error plus weighted Gaussian and categorical KL terms.

Every term accepts optional per-row weights so that a packed multi-window
batch reduces to the mean over windows of each window's own mean.  Without
weights the reductions are plain means over one window.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .latent import GaussianParams
from .tensor import Tensor

PROB_FLOOR = 1e-12


@dataclass
class LossWeights:
    lambda_z: float = 0.005
    lambda_c: float = 0.005

    def __post_init__(self):
        if self.lambda_z < 0 or self.lambda_c < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class LossBreakdown:
    reconstruction: Tensor
    kl_gaussian: Tensor
    kl_categorical: Tensor
    total: Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k).data) for k in ("reconstruction", "kl_gaussian", "kl_categorical", "total")}


def _weighted(values: Tensor, weights: np.ndarray | None) -> Tensor:
    if values.size == 0:
        return Tensor(0.0)
    if weights is None:
        return T.mean(values)
    return T.sum_(values * weights)


def reconstruction_loss(y, y_hat, weights: np.ndarray | None = None) -> Tensor:
    """Mean Euclidean distance between matching points of ``N x T x 2`` arrays.

    ``weights`` (length N) replaces the mean over pedestrians; timesteps are
    always averaged.
    """
    y, y_hat = T.as_tensor(y), T.as_tensor(y_hat)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    per_ped = T.mean(T.norm_lastdim(y_hat - y), axis=1)
    return _weighted(per_ped, weights)


def gaussian_kl(q: GaussianParams, p: GaussianParams, weights: np.ndarray | None = None) -> Tensor:
    """KL(q || p) for diagonal Gaussians, summed over latent dims, averaged over pedestrians."""
    if q.mu.shape != p.mu.shape:
        raise ValueError(f"shape mismatch: {q.mu.shape} vs {p.mu.shape}")
    inv_var_p = T.exp(-p.log_var)
    term = (p.log_var - q.log_var) + T.exp(q.log_var) * inv_var_p \
        + T.square(q.mu - p.mu) * inv_var_p - 1.0
    return _weighted(T.sum_(term, axis=-1) * 0.5, weights)


def categorical_kl(q, p, weights: np.ndarray | None = None) -> Tensor:
    """Mean over rows of ``sum_h q_h (log q_h - log p_h)``; ``0 log 0 = 0``, ``p`` floored at 1e-12."""
    q, p = T.as_tensor(q), T.as_tensor(p)
    if q.shape != p.shape:
        raise ValueError(f"shape mismatch: {q.shape} vs {p.shape}")
    if q.size == 0:
        return Tensor(0.0)
    support = q.data > 0
    # log q is only evaluated where q > 0; the masked entries contribute exactly zero
    log_q = T.log(T.clamp(q, PROB_FLOOR, None)) * support
    cross = q * (log_q - T.log(T.clamp(p, PROB_FLOOR, None)))
    return _weighted(T.sum_(cross, axis=-1), weights)


def total_loss(y, y_hat, q_z: GaussianParams, p_z: GaussianParams, q_c, p_c,
               weights: LossWeights, ped_weights: np.ndarray | None = None,
               pair_weights: np.ndarray | None = None) -> LossBreakdown:
    rec = reconstruction_loss(y, y_hat, ped_weights)
    kl_z = gaussian_kl(q_z, p_z, ped_weights)
    kl_c = categorical_kl(q_c, p_c, pair_weights)
    total = rec + kl_z * weights.lambda_z + kl_c * weights.lambda_c
    return LossBreakdown(rec, kl_z, kl_c, total)

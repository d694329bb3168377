"""Autoregressive displacement decoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Linear, LSTMCell, Module
from .tensor import Tensor


@dataclass
class DecoderState:
    carry: tuple[Tensor, Tensor]
    last_displacement: Tensor
    step: int = 0


class Decoder(Module):
    """Per-pedestrian LSTM fed its own previous output at every step.

    The recurrent state starts from ``tanh(W [h_encoder, z, context])``; each
    step embeds the previous displacement, appends ``(z, context)`` and maps
    the new hidden state to a 2-D displacement.
    """

    def __init__(self, feature_dim: int, z_dim: int, context_dim: int, rng: np.random.Generator,
                 hidden: int = 64, embed: int = 32):
        super().__init__()
        cond = z_dim + context_dim
        self.init_proj = Linear(feature_dim + cond, hidden, rng)
        self.embed = Linear(2, embed, rng)
        self.lstm = LSTMCell(embed + cond, hidden, rng)
        # small initial head: the first predictions start near "stand still"
        self.head = Linear(hidden, 2, rng, init_scale=0.1)
        self.trace: list[np.ndarray] | None = None

    def start(self, h_encoder, z, context, last_displacement) -> DecoderState:
        h0 = T.tanh(self.init_proj(T.concat([h_encoder, z, context], axis=1)))
        c0 = Tensor(np.zeros(h0.shape))
        return DecoderState((h0, c0), T.as_tensor(last_displacement), 0)

    def step(self, state: DecoderState, cond) -> DecoderState:
        if self.trace is not None:
            self.trace.append(state.last_displacement.data.copy())
        e = T.tanh(self.embed(state.last_displacement))
        carry = self.lstm(T.concat([e, cond], axis=1), state.carry)
        return DecoderState(carry, self.head(carry[0]), state.step + 1)

    def __call__(self, h_encoder, z, context, last_displacement, t_pred: int) -> Tensor:
        """Displacements of shape ``M x t_pred x 2``."""
        if t_pred < 1:
            raise ValueError("t_pred must be at least 1")
        state = self.start(h_encoder, z, context, last_displacement)
        cond = T.concat([z, context], axis=1)
        outputs = []
        for _ in range(t_pred):
            state = self.step(state, cond)
            outputs.append(state.last_displacement)
        return T.stack(outputs, axis=1)


def integrate_displacements(displacements, last_observed) -> Tensor:
    """Positions ``p_t = last_observed + sum_{s<=t} v_s``; differentiable in the displacements."""
    d = T.as_tensor(displacements)
    base = T.as_tensor(last_observed)
    return T.cumsum(d, axis=1) + T.reshape(base, (d.shape[0], 1, 2))

"""Parameter containers and the small layer set the model is built from."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(data, requires_grad=True, name=name)


class Module:
    """Attribute-discovered parameter tree with a train/eval flag."""

    def __init__(self):
        self.training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator[Module]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> Module:
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data[...] = state[name]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True,
                 init_scale: float = 1.0):
        super().__init__()
        self.weight = Parameter(init_scale * glorot(rng, n_in, n_out))
        self.bias = Parameter(np.zeros(n_out)) if bias else None

    def __call__(self, x) -> Tensor:
        return T.affine(x, self.weight, self.bias)


class MLP(Module):
    """Linear layers with tanh between them; the output layer stays linear.

    Dropout, when a generator is passed in train mode, hits hidden activations.
    """

    def __init__(self, sizes: list[int], rng: np.random.Generator, dropout: float = 0.0):
        super().__init__()
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.dropout = dropout

    def __call__(self, x, rng: np.random.Generator | None = None) -> Tensor:
        h = x
        for layer in self.layers[:-1]:
            h = T.tanh(layer(h))
            h = T.dropout(h, self.dropout, self.training, rng)
        return self.layers[-1](h)


class LSTMCell(Module):
    """Standard LSTM step with gates packed in (input, forget, cell, output) order."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.gates = Linear(n_in + hidden, 4 * hidden, rng)
        self.gates.bias.data[hidden:2 * hidden] = 1.0

    def initial_state(self, n: int) -> tuple[Tensor, Tensor]:
        return Tensor(np.zeros((n, self.hidden))), Tensor(np.zeros((n, self.hidden)))

    def __call__(self, x, state: tuple[Tensor, Tensor]) -> tuple[Tensor, Tensor]:
        h, c = state
        H = self.hidden
        z = self.gates(T.concat([x, h], axis=1))
        i = T.sigmoid(z[:, :H])
        f = T.sigmoid(z[:, H:2 * H])
        g = T.tanh(z[:, 2 * H:3 * H])
        o = T.sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        h = o * T.tanh(c)
        return h, c

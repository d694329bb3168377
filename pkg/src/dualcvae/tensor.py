"""Minimal reverse-mode automatic differentiation on top of numpy.

Graphs are built define-by-run: every op returns a new :class:`Tensor` that
remembers its parents and a closure mapping the upstream gradient to one
gradient per parent.  Node ids increase monotonically with creation, so the
creation order is a valid topological order and :func:`backward` simply walks
the reachable nodes by descending id.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

_ids = itertools.count()
_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op", "_id")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.name = name
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op = "leaf"
        self._id = next(_ids)

    # -- basics ---------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag})"

    def backward(self) -> None:
        backward(self)

    # -- operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor(data)
    out._op = op
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- graph traversal -----------------------------------------------------------
class ComputationGraph:
    """Nodes reachable from a root, in creation (topological) order."""

    def __init__(self, root: Tensor):
        seen: dict[int, Tensor] = {}
        stack = [root]
        while stack:
            node = stack.pop()
            if node._id in seen:
                continue
            seen[node._id] = node
            stack.extend(node._parents)
        self.nodes: list[Tensor] = [seen[k] for k in sorted(seen)]
        self.root = root

    def __len__(self) -> int:
        return len(self.nodes)

    def reverse(self) -> Iterable[Tensor]:
        return reversed(self.nodes)


def backward(loss: Tensor, graph: ComputationGraph | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf."""
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    graph = graph or ComputationGraph(loss)
    adj: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    for node in graph.reverse():
        g = adj.pop(node._id, None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = _unbroadcast(pg, parent.shape)
            if parent._id in adj:
                adj[parent._id] = adj[parent._id] + pg
            else:
                adj[parent._id] = pg


# -- elementwise arithmetic -----------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(out, (a, b), lambda g: (g / b.data, -g * out / b.data), "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


# -- nonlinearities --------------------------------------------------------------
def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def clamp(a, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip values; the gradient is zero wherever the clip is active."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    mask = out == a.data
    return _make(out, (a,), lambda g: (g * mask,), "clamp")


def norm_lastdim(a) -> Tensor:
    """Euclidean norm over the last axis; subgradient 0 at the origin."""
    a = as_tensor(a)
    out = np.sqrt(np.sum(a.data * a.data, axis=-1))

    def bw(g):
        safe = np.where(out > 0, out, 1.0)
        scale = np.where(out > 0, g / safe, 0.0)
        return (a.data * scale[..., None],)

    return _make(out, (a,), bw, "norm")


def softmax_lastdim(a) -> Tensor:
    a = as_tensor(a)
    if a.shape[-1] < 1:
        raise ValueError("softmax over an empty axis")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return _make(out, (a,), bw, "softmax")


def log_softmax_lastdim(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _make(out, (a,), bw, "log_softmax")


# -- linear algebra ---------------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def affine(x, w, b=None) -> Tensor:
    """``x @ w + b`` for 2-D ``x`` as a single node."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"affine dimension mismatch: {x.shape} @ {w.shape}")
    out = x.data @ w.data
    if b is None:
        return _make(out, (x, w), lambda g: (g @ w.data.T, x.data.T @ g), "affine")
    b = as_tensor(b)
    out = out + b.data
    return _make(out, (x, w, b), lambda g: (g @ w.data.T, x.data.T @ g, g.sum(axis=0)), "affine")


# -- shape manipulation --------------------------------------------------------------
def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.T, (a,), lambda g: (g.T,), "transpose")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        full = np.zeros_like(a.data)
        if _has_array_index(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _make(a.data[index], (a,), bw, "getitem")


def _has_array_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (np.ndarray, list)) for i in items)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    axis = axis % ts[0].ndim
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(np.concatenate([t.data for t in ts], axis=axis), ts, bw, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    axis = axis % (ts[0].ndim + 1)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return _make(np.stack([t.data for t in ts], axis=axis), ts, bw, "stack")


# -- reductions -------------------------------------------------------------------
def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), bw, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum_(a, axis, keepdims) * (1.0 / n)


def cumsum(a, axis: int) -> Tensor:
    a = as_tensor(a)
    rev = [slice(None)] * a.ndim
    rev[axis] = slice(None, None, -1)
    rev = tuple(rev)
    return _make(np.cumsum(a.data, axis=axis), (a,),
                 lambda g: (np.cumsum(g[rev], axis=axis)[rev],), "cumsum")


# -- gather / segment ops ------------------------------------------------------------
def gather(a, index: np.ndarray) -> Tensor:
    """Rows ``a[index]``; gradients scatter-add back."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(a.data[index], (a,), bw, "gather")


def segment_sum(a, segment: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``a`` that share a segment id; empty segments give zeros."""
    a = as_tensor(a)
    segment = np.asarray(segment, dtype=np.intp)
    out = np.zeros((num_segments,) + a.shape[1:], dtype=DTYPE)
    np.add.at(out, segment, a.data)
    return _make(out, (a,), lambda g: (g[segment],), "segment_sum")


def segment_softmax(a, segment: np.ndarray, num_segments: int) -> Tensor:
    """Softmax over the rows of each segment, independently per trailing column."""
    a = as_tensor(a)
    segment = np.asarray(segment, dtype=np.intp)
    shift = np.full((num_segments,) + a.shape[1:], -np.inf)
    np.maximum.at(shift, segment, a.data)
    # constant shift: softmax is invariant to it so no gradient path is needed
    e = exp(a - shift[segment])
    return e / gather(segment_sum(e, segment, num_segments), segment)


# -- stochastic --------------------------------------------------------------------
def dropout(a, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when not training or rate is zero."""
    a = as_tensor(a)
    if not training or rate <= 0.0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _make(a.data * keep, (a,), lambda g: (g * keep,), "dropout")


# -- gradient checking ------------------------------------------------------------
def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5,
                      max_entries: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Largest ``|analytic - numeric| / max(1, |numeric|)`` over parameter entries.

    ``f`` is re-evaluated from scratch for every perturbation and must read the
    current values of ``params``.  ``max_entries`` optionally subsamples entries
    per parameter.
    """
    if step <= 0:
        raise ValueError(f"finite difference step must be positive, got {step}")
    for p in params:
        p.grad = np.zeros_like(p.data)
    out = f()
    backward(as_tensor(out))
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        for idx in entries:
            orig = flat[idx]
            with no_grad():
                flat[idx] = orig + step
                up = float(as_tensor(f()).data)
                flat[idx] = orig - step
                down = float(as_tensor(f()).data)
            flat[idx] = orig
            numeric = (up - down) / (2.0 * step)
            err = abs(ga.reshape(-1)[idx] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst

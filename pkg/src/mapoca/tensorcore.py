"""Reverse-mode automatic differentiation over dense float64 arrays.

A small computation-graph engine providing everything the networks in this
package need: dense layers, activations, layer normalization, softmax
losses and the Adam optimizer.  Graphs are built per forward pass and
discarded after ``backward``; parameters are long-lived leaf nodes whose
gradients accumulate until ``zero_grad``.

Values are numpy float64 arrays of any rank.  Binary operations follow
numpy broadcasting; ``matmul`` follows ``numpy.matmul`` semantics so that
batched attention can run as stacked matrix products.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Array = np.ndarray

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (pure evaluation)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class DiffNode:
    """A node of the computation graph: a value, its gradient, and edges.

    ``parents`` holds ``(parent, pull)`` pairs where ``pull`` maps this
    node's upstream gradient to the parent's gradient contribution.
    ``grad`` always has the same shape as ``value``; it is lazily
    allocated as zeros and accumulates across ``backward`` calls.
    """

    __slots__ = ("value", "parents", "track", "_grad")

    def __init__(self, value, parents: Sequence = (), track: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.track = bool(track) and _grad_enabled
        self.parents = tuple(parents) if self.track else ()
        self._grad = None

    @property
    def grad(self) -> Array:
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, g) -> None:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != self.value.shape:
            raise ValueError(
                f"grad shape {g.shape} does not match value shape {self.value.shape}"
            )
        self._grad = g

    def zero_grad(self) -> None:
        self._grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"DiffNode(shape={self.value.shape}, track={self.track})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_node(x) -> DiffNode:
    return x if isinstance(x, DiffNode) else DiffNode(x)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _make(value: Array, parents: list, *nodes: DiffNode) -> DiffNode:
    track = _grad_enabled and any(n.track for n in nodes)
    if not track:
        return DiffNode(value)
    return DiffNode(value, [(n, f) for n, f in parents if n.track], track=True)


def add(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    out = a.value + b.value
    return _make(
        out,
        [(a, lambda g: _unbroadcast(g, a.value.shape)),
         (b, lambda g: _unbroadcast(g, b.value.shape))],
        a, b,
    )


def sub(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    out = a.value - b.value
    return _make(
        out,
        [(a, lambda g: _unbroadcast(g, a.value.shape)),
         (b, lambda g: _unbroadcast(-g, b.value.shape))],
        a, b,
    )


def mul(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    out = a.value * b.value
    return _make(
        out,
        [(a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
         (b, lambda g: _unbroadcast(g * a.value, b.value.shape))],
        a, b,
    )


def neg(a) -> DiffNode:
    a = as_node(a)
    return _make(-a.value, [(a, lambda g: -g)], a)


def matmul(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ValueError(
            f"matmul requires 2-D or higher operands, got {a.value.shape} @ {b.value.shape}"
        )
    if a.value.shape[-1] != b.value.shape[-2]:
        raise ValueError(
            f"matmul shape mismatch: {a.value.shape} @ {b.value.shape}"
        )
    out = a.value @ b.value

    if b.value.ndim == 2:
        # batched rows against one weight matrix: flatten the batch so the
        # gradients are two plain GEMMs instead of B tiny stacked products
        d_in, d_out = b.value.shape

        def pull_a(g: Array) -> Array:
            return (g.reshape(-1, d_out) @ b.value.T).reshape(a.value.shape)

        def pull_b(g: Array) -> Array:
            return a.value.reshape(-1, d_in).T @ g.reshape(-1, d_out)

    else:

        def pull_a(g: Array) -> Array:
            return _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.value.shape)

        def pull_b(g: Array) -> Array:
            return _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.value.shape)

    return _make(out, [(a, pull_a), (b, pull_b)], a, b)


def swap_axes(a, axis1: int, axis2: int) -> DiffNode:
    a = as_node(a)
    out = np.swapaxes(a.value, axis1, axis2)
    return _make(out, [(a, lambda g: np.swapaxes(g, axis1, axis2))], a)


def reshape(a, shape: tuple[int, ...]) -> DiffNode:
    a = as_node(a)
    out = a.value.reshape(shape)
    original = a.value.shape
    return _make(out, [(a, lambda g: g.reshape(original))], a)


def concat(nodes: Sequence, axis: int = 0) -> DiffNode:
    nodes = [as_node(n) for n in nodes]
    if not nodes:
        raise ValueError("concat requires at least one node")
    out = np.concatenate([n.value for n in nodes], axis=axis)
    parents = []
    offset = 0
    for n in nodes:
        size = n.value.shape[axis]
        start = offset

        def pull(g: Array, start=start, size=size) -> Array:
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, start + size)
            return g[tuple(index)]

        parents.append((n, pull))
        offset += size
    return _make(out, parents, *nodes)


def relu(a) -> DiffNode:
    a = as_node(a)
    mask = a.value > 0.0
    return _make(a.value * mask, [(a, lambda g: g * mask)], a)


def exp(a) -> DiffNode:
    a = as_node(a)
    out = np.exp(a.value)
    return _make(out, [(a, lambda g: g * out)], a)


def log(a) -> DiffNode:
    a = as_node(a)
    return _make(np.log(a.value), [(a, lambda g: g / a.value)], a)


def square(a) -> DiffNode:
    a = as_node(a)
    return _make(a.value * a.value, [(a, lambda g: g * (2.0 * a.value))], a)


def clip(a, lower, upper) -> DiffNode:
    """Clamp values to ``[lower, upper]``; gradient passes only inside."""
    a = as_node(a)
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    out = np.clip(a.value, lo, hi)
    mask = (a.value >= lo) & (a.value <= hi)
    return _make(out, [(a, lambda g: g * mask)], a)


def maximum(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    pick_a = a.value >= b.value
    out = np.where(pick_a, a.value, b.value)
    return _make(
        out,
        [(a, lambda g: _unbroadcast(g * pick_a, a.value.shape)),
         (b, lambda g: _unbroadcast(g * ~pick_a, b.value.shape))],
        a, b,
    )


def minimum(a, b) -> DiffNode:
    a, b = as_node(a), as_node(b)
    pick_a = a.value <= b.value
    out = np.where(pick_a, a.value, b.value)
    return _make(
        out,
        [(a, lambda g: _unbroadcast(g * pick_a, a.value.shape)),
         (b, lambda g: _unbroadcast(g * ~pick_a, b.value.shape))],
        a, b,
    )


def reduce_sum(a, axis: int | None = None, keepdims: bool = False) -> DiffNode:
    a = as_node(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)
    shape = a.value.shape

    def pull(g: Array) -> Array:
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        expanded = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(expanded, shape).copy()

    return _make(out, [(a, pull)], a)


def reduce_mean(a, axis: int | None = None, keepdims: bool = False) -> DiffNode:
    a = as_node(a)
    out = a.value.mean(axis=axis, keepdims=keepdims)
    shape = a.value.shape
    count = a.value.size if axis is None else shape[axis]

    def pull(g: Array) -> Array:
        if axis is None:
            return np.broadcast_to(g / count, shape).copy()
        expanded = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(expanded / count, shape).copy()

    return _make(out, [(a, pull)], a)


def softmax(a) -> DiffNode:
    """Softmax over the last axis; rows are nonnegative and sum to 1."""
    a = as_node(a)
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def pull(g: Array) -> Array:
        return out * (g - (g * out).sum(axis=-1, keepdims=True))

    return _make(out, [(a, pull)], a)


def log_softmax(a) -> DiffNode:
    a = as_node(a)
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)

    def pull(g: Array) -> Array:
        return g - probs * g.sum(axis=-1, keepdims=True)

    return _make(out, [(a, pull)], a)


def gather_last(a, indices) -> DiffNode:
    """Pick one element per row along the last axis."""
    a = as_node(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape != a.value.shape[:-1]:
        raise ValueError(
            f"gather_last indices shape {idx.shape} does not match leading "
            f"dims of {a.value.shape}"
        )
    out = np.take_along_axis(a.value, idx[..., None], axis=-1)[..., 0]
    shape = a.value.shape

    def pull(g: Array) -> Array:
        z = np.zeros(shape)
        flat = z.reshape(-1, shape[-1])
        rows = np.arange(flat.shape[0])
        flat[rows, idx.reshape(-1)] = g.reshape(-1)
        return z

    return _make(out, [(a, pull)], a)


LAYER_NORM_EPSILON = 1e-5


def layer_norm(a, gain, shift, epsilon: float = LAYER_NORM_EPSILON) -> DiffNode:
    """Normalize the last axis to zero mean, unit variance, then scale/shift.

    The normalized width must be at least 2; the per-row variance of a
    single element is degenerate.
    """
    a, gain, shift = as_node(a), as_node(gain), as_node(shift)
    width = a.value.shape[-1]
    if width < 2:
        raise ValueError(f"layer_norm requires width >= 2, got {width}")
    mu = a.value.mean(axis=-1, keepdims=True)
    centered = a.value - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + epsilon)
    normalized = centered * inv
    out = normalized * gain.value + shift.value

    def pull_input(g: Array) -> Array:
        g_norm = g * gain.value
        mean_g = g_norm.mean(axis=-1, keepdims=True)
        mean_gx = (g_norm * normalized).mean(axis=-1, keepdims=True)
        return inv * (g_norm - mean_g - normalized * mean_gx)

    return _make(
        out,
        [(a, pull_input),
         (gain, lambda g: _unbroadcast(g * normalized, gain.value.shape)),
         (shift, lambda g: _unbroadcast(g, shift.value.shape))],
        a, gain, shift,
    )


def linear_forward(inputs, weight, bias) -> DiffNode:
    """Dense layer: ``inputs @ weight + bias`` with the bias broadcast over rows."""
    inputs, weight, bias = as_node(inputs), as_node(weight), as_node(bias)
    if weight.value.ndim != 2:
        raise ValueError(f"weight must be 2-D, got shape {weight.value.shape}")
    d_in, d_out = weight.value.shape
    if inputs.value.ndim < 2 or inputs.value.shape[-1] != d_in:
        raise ValueError(
            f"linear_forward: input shape {inputs.value.shape} does not conform "
            f"to weight shape {weight.value.shape}"
        )
    if bias.value.shape[-1] != d_out:
        raise ValueError(
            f"linear_forward: bias shape {bias.value.shape} does not provide "
            f"{d_out} output features"
        )
    return add(matmul(inputs, weight), bias)


def softmax_cross_entropy(logits, target_indices) -> DiffNode:
    """Mean cross-entropy between softmax(logits) and integer class targets."""
    lp = log_softmax(logits)
    picked = gather_last(lp, target_indices)
    return neg(reduce_mean(picked))


def mean_squared_error(prediction, target) -> DiffNode:
    return reduce_mean(square(sub(prediction, target)))


def backward(loss: DiffNode) -> None:
    """Accumulate d(loss)/d(node) into every reachable node's ``grad``.

    Repeated calls without ``zero_grad`` sum their contributions.
    """
    if loss.value.size != 1:
        raise ValueError(
            f"backward requires a scalar loss, got shape {loss.value.shape}"
        )
    topo: list[DiffNode] = []
    seen: set[int] = set()
    stack: list[tuple[DiffNode, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    pending: dict[int, Array] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(topo):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._grad is None:
            node._grad = g
        else:
            node._grad = node._grad + g
        for parent, pull in node.parents:
            contribution = pull(g)
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + contribution
            else:
                pending[key] = contribution


# ---------------------------------------------------------------------------
# Parameter initialization and layer helpers


def fan_uniform(rng: np.random.Generator, d_in: int, d_out: int) -> Array:
    """Symmetric fan-based init: uniform in +-sqrt(6 / (d_in + d_out))."""
    limit = math.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


class Dense:
    """A dense layer holding its own weight and bias parameters."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.weight = DiffNode(fan_uniform(rng, d_in, d_out), track=True)
        self.bias = DiffNode(np.zeros((1, d_out)), track=True)

    def __call__(self, x) -> DiffNode:
        return linear_forward(x, self.weight, self.bias)

    def parameters(self) -> list[DiffNode]:
        return [self.weight, self.bias]


class Mlp:
    """Dense stack with ReLU between layers and a linear final layer."""

    def __init__(self, d_in: int, widths: Sequence[int], rng: np.random.Generator):
        if not widths:
            raise ValueError("Mlp needs at least one layer width")
        self.layers: list[Dense] = []
        previous = d_in
        for w in widths:
            self.layers.append(Dense(previous, w, rng))
            previous = w

    def __call__(self, x) -> DiffNode:
        h = as_node(x)
        for layer in self.layers[:-1]:
            h = relu(layer(h))
        return self.layers[-1](h)

    def parameters(self) -> list[DiffNode]:
        return [p for layer in self.layers for p in layer.parameters()]


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Per-parameter Adam moments plus shared hyperparameters."""

    first_moment: Array
    second_moment: Array
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(value: Array, grad: Array, state: AdamState, lr: float) -> Array:
    """One Adam update with bias correction; mutates ``state``, returns the new value."""
    state.step_count += 1
    t = state.step_count
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    state.second_moment = (
        state.beta2 * state.second_moment + (1.0 - state.beta2) * (grad * grad)
    )
    m_hat = state.first_moment / (1.0 - state.beta1 ** t)
    v_hat = state.second_moment / (1.0 - state.beta2 ** t)
    return value - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


class Adam:
    """Adam over a fixed list of parameters."""

    def __init__(
        self,
        params: Iterable[DiffNode],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.states = [
            AdamState(
                first_moment=np.zeros_like(p.value),
                second_moment=np.zeros_like(p.value),
                beta1=beta1,
                beta2=beta2,
                epsilon=epsilon,
            )
            for p in self.params
        ]

    def step(self) -> None:
        for p, s in zip(self.params, self.states):
            p.value = adam_step(p.value, p.grad, s, self.lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

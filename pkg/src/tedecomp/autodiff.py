"""Minimal reverse-mode autodiff on numpy arrays, plus dense layers and Adam.

Everything runs in float64. Only the ops needed by the bottleneck models
are provided: matmul, broadcasting arithmetic, activations, reductions,
logsumexp, concat, clip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ShapeError, TrainingDivergedError

LEAKY_SLOPE = 0.1


class Tensor:
    """A node in the computation graph: value, gradient accumulator, parents."""

    __slots__ = ("value", "grad", "parents", "requires_grad")

    def __init__(self, value, parents=(), requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents  # tuple of (Tensor, grad_fn)
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)

    @property
    def shape(self):
        return self.value.shape

    def backward(self):
        """Reverse-mode sweep from a scalar loss; accumulates into .grad."""
        if self.value.size != 1:
            raise ContractError(f"backward requires a scalar, got shape {self.shape}")
        order = []
        seen = set()

        def visit(node):
            if id(node) in seen or not node.requires_grad:
                return
            seen.add(id(node))
            for parent, _ in node.parents:
                visit(parent)
            order.append(node)

        visit(self)
        grads = {id(self): np.ones_like(self.value)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, grad_fn in node.parents:
                if not parent.requires_grad:
                    continue
                contrib = grad_fn(g)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib

    # Operator sugar; the right operand may be a plain array or scalar.
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return mul(self, _lift(-1.0))

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(value):
    return Tensor(value, requires_grad=True)


def _unbroadcast(grad, shape):
    """Sum grad down to shape, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    return Tensor(
        a.value + b.value,
        parents=(
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(g, b.value.shape)),
        ),
    )


def sub(a, b):
    return Tensor(
        a.value - b.value,
        parents=(
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(-g, b.value.shape)),
        ),
    )


def mul(a, b):
    return Tensor(
        a.value * b.value,
        parents=(
            (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
        ),
    )


def matmul(a, b):
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul shapes {a.value.shape} x {b.value.shape} incompatible")
    return Tensor(
        a.value @ b.value,
        parents=(
            (a, lambda g: g @ b.value.T),
            (b, lambda g: a.value.T @ g),
        ),
    )


def transpose(a):
    return Tensor(a.value.T, parents=((a, lambda g: g.T),))


def leaky_relu(a, slope=LEAKY_SLOPE):
    mask = np.where(a.value > 0, 1.0, slope)
    return Tensor(a.value * mask, parents=((a, lambda g: g * mask),))


def tanh(a):
    out = np.tanh(a.value)
    return Tensor(out, parents=((a, lambda g: g * (1.0 - out * out)),))


def exp(a):
    out = np.exp(a.value)
    return Tensor(out, parents=((a, lambda g: g * out),))


def log(a):
    return Tensor(np.log(a.value), parents=((a, lambda g: g / a.value),))


def square(a):
    return Tensor(a.value * a.value, parents=((a, lambda g: g * 2.0 * a.value),))


def clip(a, lo, hi):
    """Clamp values; gradient passes only where unclamped."""
    mask = ((a.value >= lo) & (a.value <= hi)).astype(np.float64)
    return Tensor(np.clip(a.value, lo, hi), parents=((a, lambda g: g * mask),))


def sum_(a, axis=None, keepdims=False):
    def grad_fn(g):
        if axis is None:
            return np.broadcast_to(g, a.value.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.value.shape).copy()

    return Tensor(a.value.sum(axis=axis, keepdims=keepdims), parents=((a, grad_fn),))


def mean(a, axis=None, keepdims=False):
    count = a.value.size if axis is None else a.value.shape[axis]

    def grad_fn(g):
        if axis is None:
            return np.broadcast_to(g / count, a.value.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg / count, a.value.shape).copy()

    return Tensor(a.value.mean(axis=axis, keepdims=keepdims), parents=((a, grad_fn),))


def logsumexp(a, axis=None, keepdims=False):
    """Max-shifted log-sum-exp along an axis."""
    m = a.value.max(axis=axis, keepdims=True)
    shifted = np.exp(a.value - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out = np.log(total) + m
    softmax = shifted / total

    def grad_fn(g):
        if axis is None:
            return softmax * g
        gg = g if keepdims else np.expand_dims(g, axis)
        return softmax * gg

    value = out if keepdims or axis is None else np.squeeze(out, axis=axis)
    if axis is None:
        value = value.reshape(())
    return Tensor(value, parents=((a, grad_fn),))


def slice_cols(a, start, stop):
    """View of columns [start, stop) of a 2-D tensor."""

    def grad_fn(g):
        full = np.zeros_like(a.value)
        full[:, start:stop] = g
        return full

    return Tensor(a.value[:, start:stop], parents=((a, grad_fn),))


def concat(tensors, axis=1):
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_grad_fn(i):
        def grad_fn(g):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(index)]

        return grad_fn

    return Tensor(
        np.concatenate([t.value for t in tensors], axis=axis),
        parents=tuple((t, make_grad_fn(i)) for i, t in enumerate(tensors)),
    )


def zero_grads(params):
    for p in params:
        p.grad = None


ACTIVATIONS = {
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "identity": lambda x: x,
}


@dataclass
class DenseLayer:
    """y = act(x @ W.T + b) with W of shape (out, in)."""

    W: Tensor
    b: Tensor
    activation: str = "leaky_relu"

    @staticmethod
    def create(n_in, n_out, rng, activation="leaky_relu"):
        limit = np.sqrt(6.0 / (n_in + n_out))
        W = parameter(rng.uniform(-limit, limit, size=(n_out, n_in)))
        b = parameter(np.zeros(n_out))
        return DenseLayer(W, b, activation)

    def __call__(self, x):
        return ACTIVATIONS[self.activation](matmul(x, transpose(self.W)) + self.b)

    def params(self):
        return [self.W, self.b]


class MLP:
    """Stack of dense layers; hidden layers share one activation, last is identity
    unless out_activation says otherwise."""

    def __init__(self, layers):
        self.layers = layers

    @staticmethod
    def create(n_in, hidden, n_out, rng, activation="leaky_relu", out_activation="identity"):
        dims = [n_in] + list(hidden) + [n_out]
        layers = []
        for i in range(len(dims) - 1):
            act = activation if i < len(dims) - 2 else out_activation
            layers.append(DenseLayer.create(dims[i], dims[i + 1], rng, act))
        return MLP(layers)

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def params(self):
        return [p for layer in self.layers for p in layer.params()]


@dataclass
class AdamState:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, state):
    """One Adam update with bias correction; reads p.grad in place."""
    if not state.m:
        state.m = [np.zeros_like(p.value) for p in params]
        state.v = [np.zeros_like(p.value) for p in params]
    state.step += 1
    t = state.step
    for i, p in enumerate(params):
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient at step {t}", step=t)
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        m_hat = state.m[i] / (1 - state.beta1**t)
        v_hat = state.v[i] / (1 - state.beta2**t)
        p.value = p.value - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


def save_checkpoint(params, path_prefix):
    """Flat binary dump plus a JSON shape manifest."""
    flat = np.concatenate([p.value.ravel() for p in params])
    flat.tofile(path_prefix + ".bin")
    manifest = {"shapes": [list(p.value.shape) for p in params], "dtype": "float64"}
    with open(path_prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh)


def load_checkpoint(params, path_prefix):
    with open(path_prefix + ".json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    shapes = [tuple(s) for s in manifest["shapes"]]
    if shapes != [p.value.shape for p in params]:
        raise ShapeError("checkpoint shapes do not match the model's parameters")
    flat = np.fromfile(path_prefix + ".bin", dtype=np.float64)
    offset = 0
    for p in params:
        size = p.value.size
        p.value = flat[offset : offset + size].reshape(p.value.shape).copy()
        offset += size


def get_flat_params(params):
    return np.concatenate([p.value.ravel() for p in params])


def set_flat_params(params, flat):
    offset = 0
    for p in params:
        size = p.value.size
        p.value = flat[offset : offset + size].reshape(p.value.shape).copy()
        offset += size

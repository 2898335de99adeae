"""Reverse-mode automatic differentiation on numpy float64 arrays.

A graph is built per loss evaluation and discarded after ``backward()``.
Subgraphs with no trainable leaves carry no closures, so forward passes
through frozen networks cost nothing extra at backward time. Gradient
correctness is pinned by central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import NumericError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        backward(self)

    # operator sugar
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __sub__(self, other):
        return add(self, -_wrap(other))

    def __rsub__(self, other):
        return add(_wrap(other), -self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def const(x) -> Tensor:
    """Leaf tensor that never receives a gradient."""
    return _wrap(x)


def _node(data, parents, backward_fn) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def backward(root: Tensor):
    """Backpropagate d(root)/d(leaf) into every trainable leaf's ``.grad``."""
    if root.data.size != 1:
        raise ValueError("backward() requires a scalar root")
    if not np.isfinite(root.data):
        raise NumericError("loss is non-finite; cannot backpropagate")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def back(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def back(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), back)


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data / b.data

    def back(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(data, (a, b), back)


def power(a: Tensor, exponent: float) -> Tensor:
    a = _wrap(a)
    exponent = float(exponent)
    data = a.data**exponent

    def back(g):
        _accum(a, g * exponent * a.data ** (exponent - 1.0))

    return _node(data, (a,), back)


def relu(a: Tensor) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0

    def back(g):
        _accum(a, g * mask)

    return _node(a.data * mask, (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    a = _wrap(a)
    s = np.empty_like(a.data)
    pos = a.data >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    s[~pos] = e / (1.0 + e)

    def back(g):
        _accum(a, g * s * (1.0 - s))

    return _node(s, (a,), back)


def log(a: Tensor) -> Tensor:
    a = _wrap(a)

    def back(g):
        _accum(a, g / a.data)

    return _node(np.log(a.data), (a,), back)


def exp(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.exp(a.data)

    def back(g):
        _accum(a, g * data)

    return _node(data, (a,), back)


def sqrt(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.sqrt(a.data)

    def back(g):
        _accum(a, g * 0.5 / data)

    return _node(data, (a,), back)


def clamp(a: Tensor, lo=None, hi=None) -> Tensor:
    """Elementwise clamp; gradient passes only through interior entries."""
    a = _wrap(a)
    data = np.clip(a.data, lo, hi)
    interior = np.ones_like(a.data, dtype=bool)
    if lo is not None:
        interior &= a.data > lo
    if hi is not None:
        interior &= a.data < hi

    def back(g):
        _accum(a, g * interior)

    return _node(data, (a,), back)


def softmax(a: Tensor) -> Tensor:
    """Row softmax over the last axis."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        _accum(a, s * (g - dot))

    return _node(s, (a,), back)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _node(data, (a,), back)


def mean_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / data.size

    def back(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape) / count)

    return _node(data, (a,), back)


def reshape(a: Tensor, shape) -> Tensor:
    a = _wrap(a)

    def back(g):
        _accum(a, g.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data @ b.data

    def back(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(data, (a, b), back)


# ---------------------------------------------------------------------------
# structured ops backed by the kernels package


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride, padding) -> Tensor:
    x, w = _wrap(x), _wrap(w)
    out, cols = kernels.conv2d_forward(x.data, w.data, None if b is None else b.data, stride, padding)
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        gx, gw, gb = kernels.conv2d_backward(g, x.data, w.data, stride, padding, cols)
        _accum(x, gx)
        _accum(w, gw)
        if b is not None:
            _accum(b, gb)

    return _node(out, parents, back)


def batchnorm2d_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float):
    """Fused train-mode batch norm over [N,C,H,W] (statistics over N,H,W).

    Returns (out, batch_mean, batch_var) with the statistics as plain arrays
    for the caller's running-average bookkeeping.
    """
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    c = x.data.shape[1]
    axes = (0, 2, 3)
    count = x.data.size / c
    mu = x.data.mean(axis=axes, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    g4 = gamma.data.reshape(1, c, 1, 1)
    out = xhat * g4 + beta.data.reshape(1, c, 1, 1)

    def back(g):
        _accum(beta, g.sum(axis=axes))
        _accum(gamma, (g * xhat).sum(axis=axes))
        dxhat = g * g4
        m1 = dxhat.mean(axis=axes, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=axes, keepdims=True)
        _accum(x, inv_std * (dxhat - m1 - xhat * m2))

    node = _node(out, (x, gamma, beta), back)
    return node, mu.reshape(c).copy(), var.reshape(c).copy()


def batchnorm2d_eval(x: Tensor, gamma: Tensor, beta: Tensor,
                     running_mean: np.ndarray, running_var: np.ndarray, eps: float) -> Tensor:
    """Fused eval-mode batch norm using frozen running statistics."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    c = x.data.shape[1]
    axes = (0, 2, 3)
    inv_std = 1.0 / np.sqrt(running_var.reshape(1, c, 1, 1) + eps)
    xhat = (x.data - running_mean.reshape(1, c, 1, 1)) * inv_std
    g4 = gamma.data.reshape(1, c, 1, 1)
    out = xhat * g4 + beta.data.reshape(1, c, 1, 1)

    def back(g):
        _accum(beta, g.sum(axis=axes))
        _accum(gamma, (g * xhat).sum(axis=axes))
        _accum(x, g * (g4 * inv_std))

    return _node(out, (x, gamma, beta), back)


def maxpool2d(x: Tensor, kernel: int, stride, padding) -> Tensor:
    x = _wrap(x)
    out, idx = kernels.maxpool2d_forward(x.data, kernel, stride, padding)

    def back(g):
        _accum(x, kernels.maxpool2d_backward(g, x.data.shape, kernel, stride, padding, idx))

    return _node(out, (x,), back)

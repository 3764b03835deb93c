"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operations the labelling model needs are implemented. Values are
batched along the leading axis; float64 inputs stay float64 so gradients
can be checked against finite differences.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NumericError


class Tensor:
    """A node in the computation graph: value, gradient, backward closure."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(
        self,
        data: np.ndarray,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to the given shape, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def add(a: Tensor, b) -> Tensor:
    b = _wrap(b, a)
    out = Tensor(a.data + b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    out._backward = bwd
    return out


def sub(a: Tensor, b) -> Tensor:
    b = _wrap(b, a)
    out = Tensor(a.data - b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    out._backward = bwd
    return out


def mul(a: Tensor, b) -> Tensor:
    b = _wrap(b, a)
    out = Tensor(a.data * b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = bwd
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(m,k) @ (k,n) or (m,k) @ (k,)."""
    out = Tensor(a.data @ b.data, (a, b))

    def bwd(g):
        if b.data.ndim == 1:
            _accum(a, np.outer(g, b.data))
            _accum(b, a.data.T @ g)
        else:
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)

    out._backward = bwd
    return out


def sigmoid(a: Tensor) -> Tensor:
    # Split by sign to avoid overflow in exp.
    x = a.data
    val = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(val.astype(x.dtype), (a,))

    def bwd(g):
        _accum(a, g * val * (1.0 - val))

    out._backward = bwd
    return out


def tanh(a: Tensor) -> Tensor:
    val = np.tanh(a.data)
    out = Tensor(val, (a,))

    def bwd(g):
        _accum(a, g * (1.0 - val * val))

    out._backward = bwd
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    out._backward = bwd
    return out


def stack(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    out = Tensor(np.stack([t.data for t in tensors], axis=axis), tuple(tensors))

    def bwd(g):
        for i, t in enumerate(tensors):
            _accum(t, np.take(g, i, axis=axis))

    out._backward = bwd
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape), (a,))

    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    out._backward = bwd
    return out


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Row lookup (embedding): out[i] = a[idx[i]]."""
    idx = np.asarray(idx)
    out = Tensor(a.data[idx], (a,))

    def bwd(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, idx, g)

    out._backward = bwd
    return out


def select(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise where(mask, a, b); mask is a constant boolean array."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.data.shape)
    out = Tensor(np.where(mask, a.data, b.data), (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(np.where(mask, g, 0.0), a.data.shape))
        _accum(b, _unbroadcast(np.where(mask, 0.0, g), b.data.shape))

    out._backward = bwd
    return out


def masked_softmax(e: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis with excluded positions set to exactly zero.

    mask is a boolean array broadcastable to e; True marks valid positions.
    Rows with no valid position are an error.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), e.data.shape)
    if not mask.any(axis=-1).all():
        raise ValueError("masked_softmax: at least one row has all positions masked")
    x = np.where(mask, e.data, -np.inf)
    x = x - x.max(axis=-1, keepdims=True)
    ex = np.exp(x)
    ex = np.where(mask, ex, 0.0)
    p = ex / ex.sum(axis=-1, keepdims=True)
    out = Tensor(p.astype(e.data.dtype), (e,))

    def bwd(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        _accum(e, p * (g - inner))

    out._backward = bwd
    return out


def softmax(a: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis."""
    x = a.data - a.data.max(axis=-1, keepdims=True)
    ex = np.exp(x)
    p = ex / ex.sum(axis=-1, keepdims=True)
    out = Tensor(p, (a,))

    def bwd(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        _accum(a, p * (g - inner))

    out._backward = bwd
    return out


def attend(alpha: Tensor, h: Tensor) -> Tensor:
    """Context vectors: out[b] = sum_t alpha[b,t] * h[b,t,:]."""
    out = Tensor(np.einsum("bt,bth->bh", alpha.data, h.data), (alpha, h))

    def bwd(g):
        _accum(alpha, np.einsum("bh,bth->bt", g, h.data))
        _accum(h, alpha.data[:, :, None] * g[:, None, :])

    out._backward = bwd
    return out


def nll_sum(probs: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Sum over the batch of -ln(probs[b, targets[b]]) where mask[b] is True."""
    targets = np.asarray(targets)
    mask = np.asarray(mask, dtype=bool)
    rows = np.arange(probs.data.shape[0])
    picked = probs.data[rows, targets]
    val = -np.log(picked[mask]).sum()
    out = Tensor(np.asarray(val, dtype=probs.data.dtype), (probs,))

    def bwd(g):
        if probs.grad is None:
            probs.grad = np.zeros_like(probs.data)
        probs.grad[rows[mask], targets[mask]] -= g / picked[mask]

    out._backward = bwd
    return out


def backward(loss: Tensor, parameters: Sequence[Tensor] = ()) -> None:
    """Run reverse-mode accumulation from a scalar loss.

    Gradients of the given parameters are reset to zero first, so parameters
    unused by the graph end up with exactly-zero gradients. Non-finite values
    anywhere in the loss or parameter gradients raise NumericError.
    """
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    for p in parameters:
        p.grad = np.zeros_like(p.data)

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack_:
        node, processed = stack_.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack_.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

    for p in parameters:
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise NumericError("non-finite gradient")

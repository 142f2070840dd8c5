"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps a numpy array.  Operations record their inputs and
a VJP (vector-Jacobian product) closure on the result, forming an implicit
tape ordered by creation; :func:`backward` replays it in reverse and
accumulates gradients into the ``grad`` buffer of every reachable leaf.
One forward pass builds one tape; tapes are never reused.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from .errors import AsymmetricAdjacency, NonScalarLoss, ShapeMismatch, ValidationError

_node_ids = itertools.count()

# A recorded dependency: (input tensor, vjp mapping output-grad -> input-grad).
_Parent = tuple["Tensor", Callable[[np.ndarray], np.ndarray]]


class Tensor:
    """Dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_nid")

    def __init__(self, values, requires_grad: bool = False):
        data = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise ValidationError("leaf tensor contains NaN/Inf values")
        self.data = data
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(data) if requires_grad else None
        self._parents: tuple[_Parent, ...] = ()
        self._nid = next(_node_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:  # pragma: no cover
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # Arithmetic sugar; python scalars and arrays are wrapped as constants.
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

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(values) -> Tensor:
    """Wrap arrays/scalars as constant tensors; pass tensors through."""
    return values if isinstance(values, Tensor) else Tensor(values)


def lift(data: np.ndarray, parents: Sequence[tuple[Tensor, Callable]]) -> Tensor:
    """Record the result of a primitive with explicit VJP closures.

    Used by kernel-backed operations (adjacency normalization, relaxed
    flip overlays) that compute forward and backward outside the op set
    below.  Dependencies on non-tracked inputs are dropped.
    """
    tracked = tuple((t, fn) for t, fn in parents if t.requires_grad)
    out = object.__new__(Tensor)
    out.data = data
    out.requires_grad = bool(tracked)
    out.grad = None
    out._parents = tracked
    out._nid = next(_node_ids)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    The reverse sweep follows creation order, which is a valid reverse
    topological order of the tape, so two backward calls over identical
    tapes produce bit-identical gradients.
    """
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.data.shape}")

    reachable: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._nid in reachable:
            continue
        reachable[t._nid] = t
        stack.extend(parent for parent, _ in t._parents)

    grads: dict[int, np.ndarray] = {loss._nid: np.ones_like(loss.data)}
    for nid in sorted(reachable, reverse=True):
        t = reachable[nid]
        g = grads.pop(nid, None)
        if g is None:
            continue
        if t.is_leaf:
            if t.requires_grad:
                t.grad += g
            continue
        for parent, vjp in t._parents:
            contribution = vjp(g)
            if parent._nid in grads:
                grads[parent._nid] += contribution
            else:
                grads[parent._nid] = contribution


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data
    return lift(data, ((a, lambda g: _unbroadcast(g, a.data.shape)),
                       (b, lambda g: _unbroadcast(g, b.data.shape))))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data
    return lift(data, ((a, lambda g: _unbroadcast(g, a.data.shape)),
                       (b, lambda g: _unbroadcast(-g, b.data.shape))))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data
    return lift(data, ((a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
                       (b, lambda g: _unbroadcast(g * a.data, b.data.shape))))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data
    return lift(data, ((a, lambda g: g @ b.data.T),
                       (b, lambda g: a.data.T @ g)))


def weighted_message_pass(W, H) -> Tensor:
    """Neighborhood aggregation ``W @ H`` for a symmetric weighted adjacency."""
    W, H = as_tensor(W), as_tensor(H)
    if W.data.ndim != 2 or W.data.shape[0] != W.data.shape[1]:
        raise ShapeMismatch(f"adjacency must be square, got {W.data.shape}")
    if not np.array_equal(W.data, W.data.T):
        raise AsymmetricAdjacency("weighted adjacency is not symmetric")
    return matmul(W, H)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return lift(np.where(mask, x.data, 0.0), ((x, lambda g: g * mask),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return lift(out, ((x, lambda g: g * out * (1.0 - out)),))


def softplus(x) -> Tensor:
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    sig = 1.0 / (1.0 + np.exp(-np.abs(x.data)))
    deriv = np.where(x.data >= 0, sig, 1.0 - sig)
    return lift(data, ((x, lambda g: g * deriv),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    data = np.tanh(x.data)
    return lift(data, ((x, lambda g: g * (1.0 - data * data)),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    data = np.exp(x.data)
    return lift(data, ((x, lambda g: g * data),))


def log(x) -> Tensor:
    x = as_tensor(x)
    return lift(np.log(x.data), ((x, lambda g: g / x.data),))


def square(x) -> Tensor:
    x = as_tensor(x)
    return lift(x.data * x.data, ((x, lambda g: g * 2.0 * x.data),))


def _restore_axis(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy() if np.ndim(g) == 0 else np.full(shape, g)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)
    shape = x.data.shape
    return lift(np.asarray(data), ((x, lambda g: _restore_axis(g, shape, axis, keepdims)),))


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    data = x.data.mean(axis=axis, keepdims=keepdims)
    shape = x.data.shape
    count = x.data.size if axis is None else shape[axis]
    return lift(np.asarray(data),
                ((x, lambda g: _restore_axis(g, shape, axis, keepdims) / count),))


def logsumexp(x, axis: int, keepdims: bool = False) -> Tensor:
    """Stabilized log-sum-exp along an axis; gradient is the softmax."""
    x = as_tensor(x)
    m = x.data.max(axis=axis, keepdims=True)
    data_keep = m + np.log(np.exp(x.data - m).sum(axis=axis, keepdims=True))
    soft = np.exp(x.data - data_keep)
    data = data_keep if keepdims else np.squeeze(data_keep, axis=axis)

    def vjp(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        return gk * soft

    return lift(np.asarray(data), ((x, vjp),))


def amax(x, axis: int, keepdims: bool = False) -> Tensor:
    """Maximum along an axis; ties route the gradient to the lowest index."""
    x = as_tensor(x)
    data_keep = x.data.max(axis=axis, keepdims=True)
    hit = x.data == data_keep
    first = hit & (np.cumsum(hit, axis=axis) == 1)
    data = data_keep if keepdims else np.squeeze(data_keep, axis=axis)

    def vjp(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        return gk * first

    return lift(np.asarray(data), ((x, vjp),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    parents = []
    offset = 0
    for t in ts:
        size = t.data.shape[axis]
        sl = [slice(None)] * data.ndim
        sl[axis] = slice(offset, offset + size)
        parents.append((t, lambda g, sl=tuple(sl): g[sl]))
        offset += size
    return lift(data, parents)


def rows(x, index) -> Tensor:
    """Gather rows by integer index; the VJP scatter-adds them back."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.intp)
    shape = x.data.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return out

    return lift(x.data[idx], ((x, vjp),))


def transpose(x) -> Tensor:
    x = as_tensor(x)
    return lift(x.data.T.copy(), ((x, lambda g: g.T),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.data.shape
    return lift(x.data.reshape(shape), ((x, lambda g: g.reshape(old)),))

"""Tape-free reverse-mode differentiation over numpy arrays.

Each :class:`Tensor` produced by an operation keeps references to its parents and a
closure mapping the upstream gradient to parent gradients. ``backward`` walks the
recorded graph in reverse topological order. Only the operations needed by the
surrogate models are provided.
"""
import contextlib

import numpy as np

from ..errors import GraphError, ShapeError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _as_array(value):
    arr = np.asarray(value)
    if arr.dtype.kind in "biu":
        arr = arr.astype(np.float64)
    return arr


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data, parents, backward):
        out = cls(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return take(self, index)

    def backward(self, seed=None):
        backward(self, seed)


def tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def add(a, b):
    a, b = tensor(a), tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = tensor(a), tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = tensor(a), tensor(b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), bw)


def matmul(a, b):
    a, b = tensor(a), tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(a.data @ b.data, (a, b), bw)


def transpose(a):
    def bw(g):
        return (g.T,)

    return Tensor._from_op(a.data.T, (a,), bw)


def relu(a):
    a = tensor(a)
    mask = a.data > 0

    def bw(g):
        return (g * mask,)

    return Tensor._from_op(np.where(mask, a.data, 0.0).astype(a.data.dtype), (a,), bw)


def _is_basic(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, np.integer)) or p is None or p is Ellipsis for p in parts)


def take(a, index):
    basic = _is_basic(index)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor._from_op(a.data[index], (a,), bw)


def concat(tensors, axis=-1):
    tensors = [tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            out.append(g[tuple(sl)])
        return tuple(out)

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def sum_all(a):
    def bw(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._from_op(a.data.sum(), (a,), bw)


def mean_all(a):
    n = a.data.size

    def bw(g):
        return (np.full(a.shape, g / n, dtype=a.data.dtype),)

    return Tensor._from_op(a.data.sum() / n, (a,), bw)


def mse(a, b):
    """Mean of squared elementwise differences of two same-shaped operands."""
    a, b = tensor(a), tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size

    def bw(g):
        ga = (2.0 / n) * g * diff
        return ga, -ga

    return Tensor._from_op((diff * diff).sum() / n, (a, b), bw)


def custom(value, parents, backward_fn):
    """Record an operation whose value and vector-Jacobian product are supplied by the caller."""
    return Tensor._from_op(_as_array(value), tuple(tensor(p) for p in parents), backward_fn)


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order[::-1]


def backward(root, seed=None):
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every leaf requiring grad."""
    if not isinstance(root, Tensor) or not root.requires_grad:
        raise GraphError("value was not recorded on a differentiable graph")
    if seed is None:
        if root.data.size != 1:
            raise GraphError(f"non-scalar output of shape {root.shape} needs an explicit seed")
        seed = np.ones_like(root.data)
    seed = _as_array(seed)
    if seed.shape != root.shape:
        raise ShapeError(f"seed shape {seed.shape} does not match output {root.shape}")

    grads = {id(root): seed}
    for node in _topological(root):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def grad(root, params):
    """Return gradients of ``root`` with respect to ``params`` without touching ``.grad``."""
    saved = [p.grad for p in params]
    for p in params:
        p.grad = None
    try:
        backward(root)
        out = [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
    finally:
        for p, g in zip(params, saved):
            p.grad = g
    return out

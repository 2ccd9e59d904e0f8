"""Reverse-mode autodiff over numpy arrays.

Every op builds a node holding its parents and a closure mapping the output
gradient to parent gradients. :func:`backward` walks the graph in reverse
topological order. Only the ops the CNSL model needs are provided.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


def _check(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.isfinite(arr).all():
        bad = int((~np.isfinite(arr)).sum())
        raise NonFiniteError(f"{name}: {bad} non-finite value(s) in output of shape {arr.shape}")
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents: tuple = ()
        self.backward_fn = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}{', grad' if self.requires_grad else ''})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(op: str, data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    out = Tensor(_check(op, data))
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.backward_fn = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ------------------------------------------------------------------ ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _node("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _node("matmul", a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def spmm(matrix: sp.spmatrix, h: Tensor) -> Tensor:
    """Constant sparse matrix times a dense tensor."""
    if matrix.shape[1] != h.shape[0]:
        raise ValueError(f"spmm shape mismatch: {matrix.shape} @ {h.shape}")
    mt = matrix.T.tocsr()
    return _node("spmm", np.asarray(matrix @ h.data), (h,), lambda g: (np.asarray(mt @ g),))


def transpose(a: Tensor) -> Tensor:
    return _node("transpose", a.data.T, (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    return _node("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def getitem(a: Tensor, idx) -> Tensor:
    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)
    return _node("getitem", a.data[idx], (a,), back)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _node("concat", np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node("relu", a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _node("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node("tanh", out, (a,), lambda g: (g * (1.0 - out ** 2),))


def identity(a: Tensor) -> Tensor:
    return a


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _node("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _node("log", out, (a,), lambda g: (g / a.data,))


def square(a: Tensor) -> Tensor:
    return _node("square", a.data ** 2, (a,), lambda g: (2.0 * g * a.data,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp; gradient passes only where the input is inside ``[lo, hi]``."""
    mask = (a.data >= lo) & (a.data <= hi)
    return _node("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def tsum(a: Tensor) -> Tensor:
    return _node("sum", np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    return _node("mean", np.asarray(a.data.mean()), (a,),
                 lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def gather_max(a: Tensor, winner: np.ndarray) -> Tensor:
    """``out[j] = a[winner[j]]`` along the last axis, 0 where ``winner[j] < 0``.

    Used for max-aggregated bridge transfer: ``winner`` holds the argmax
    source for each target, so the gradient flows to that source only.
    """
    valid = winner >= 0
    src = np.where(valid, winner, 0)
    out = np.where(valid, a.data[..., src], 0.0)

    def back(g):
        full = np.zeros_like(a.data)
        gv = np.where(valid, g, 0.0)
        if full.ndim == 1:
            np.add.at(full, src, gv)
        else:
            np.add.at(full, (..., src), gv)
        return (full,)
    return _node("gather_max", out, (a,), back)


ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh, "identity": identity}


# ------------------------------------------------------------------ backward


def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            pg = _check(f"grad of {node.op}", np.asarray(pg, dtype=np.float64))
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


def grad(loss: Tensor, wrt: list[Tensor]) -> list[np.ndarray]:
    """Gradients of ``loss`` w.r.t. ``wrt`` without leaving state behind."""
    saved = [(t.grad, t.requires_grad) for t in wrt]
    for t in wrt:
        t.grad = None
    try:
        backward(loss)
        return [np.zeros_like(t.data) if t.grad is None else t.grad for t in wrt]
    finally:
        for t, (g, _) in zip(wrt, saved):
            t.grad = g

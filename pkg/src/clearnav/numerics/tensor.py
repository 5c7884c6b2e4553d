"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every op produces a new :class:`Tensor` and, when gradients are enabled and
some input requires them, records a closure that pushes the output gradient
back to the inputs.  Node ids grow monotonically, so sorting reachable nodes
by id gives a valid reverse topological order without recursion.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "NonFiniteError",
    "ShapeError",
    "as_tensor",
    "no_grad",
    "grad_enabled",
    "backward",
    "concat",
    "stack",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "relu",
    "softmax",
    "log_softmax",
    "normalize",
    "layer_norm",
    "matmul",
    "where_mask",
]

_ids = itertools.count()
_state = threading.local()


class NonFiniteError(ArithmeticError):
    """Raised when an op produces NaN or Inf."""


class ShapeError(ValueError):
    pass


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _check_finite(data: np.ndarray, op: str) -> None:
    # a single reduction is cheaper than an elementwise mask; an overflowing
    # sum of finite values falls through to the exact check
    if not np.isfinite(np.add.reduce(data, axis=None)) and not np.isfinite(data).all():
        raise NonFiniteError(f"non-finite values produced by {op}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    nlead = g.ndim - len(shape)
    if nlead > 0:
        g = g.sum(axis=tuple(range(nlead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_id", "name", "op")

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, "constructor")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._id = next(_ids)
        self.name = name
        self.op = "leaf"

    # -- construction helpers -------------------------------------------
    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], op: str) -> "Tensor":
        _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.op = op
        out._id = next(_ids)
        out._backward = None
        track = grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    def __len__(self) -> int:
        return len(self.data)

    def backward(self) -> None:
        backward(self)

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor._result(self.data + other.data, (self, other), "add")
        if out.requires_grad:
            a, b = self, other

            def _bw(g):
                _acc(a, g)
                _acc(b, g)

            out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor._result(-self.data, (self,), "neg")
        if out.requires_grad:
            a = self
            out._backward = lambda g: _acc(a, -g)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor._result(self.data * other.data, (self, other), "mul")
        if out.requires_grad:
            a, b = self, other

            def _bw(g):
                if a.requires_grad:
                    _acc(a, g * b.data)
                if b.requires_grad:
                    _acc(b, g * a.data)

            out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor._result(self.data / other.data, (self, other), "div")
        if out.requires_grad:
            a, b = self, other

            def _bw(g):
                if a.requires_grad:
                    _acc(a, g / b.data)
                if b.requires_grad:
                    _acc(b, -g * a.data / (b.data * b.data))

            out._backward = _bw
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, p: float):
        p = float(p)
        out = Tensor._result(self.data ** p, (self,), "pow")
        if out.requires_grad:
            a = self
            out._backward = lambda g: _acc(a, g * p * a.data ** (p - 1.0))
        return out

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __rmatmul__(self, other):
        return matmul(as_tensor(other), self)

    # -- shape ops ------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor._result(self.data.reshape(shape), (self,), "reshape")
        if out.requires_grad:
            a = self
            out._backward = lambda g: _acc(a, g.reshape(a.data.shape))
        return out

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        out = Tensor._result(self.data.transpose(axes), (self,), "transpose")
        if out.requires_grad:
            a = self
            out._backward = lambda g: _acc(a, g.transpose(inv))
        return out

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def swapaxes(self, a1: int, a2: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a1], axes[a2] = axes[a2], axes[a1]
        return self.transpose(tuple(axes))

    def __getitem__(self, idx) -> "Tensor":
        if isinstance(idx, Tensor):
            raise TypeError("index with numpy arrays, not Tensors")
        out = Tensor._result(np.array(self.data[idx]), (self,), "getitem")
        if out.requires_grad:
            a = self

            def _bw(g):
                full = np.zeros_like(a.data)
                np.add.at(full, idx, g)
                _acc(a, full)

            out._backward = _bw
        return out

    # -- reductions -----------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = Tensor._result(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), "sum")
        if out.requires_grad:
            a = self

            def _bw(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                _acc(a, np.broadcast_to(g, a.data.shape))

            out._backward = _bw
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else np.prod([self.data.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(np.asarray(g, dtype=np.float64), t.data.shape)
    # gradients are never modified in place, so sharing buffers is safe
    t.grad = g if t.grad is None else t.grad + g


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every reachable leaf."""
    if root.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    seen = {root._id: root}
    stack_ = [root]
    while stack_:
        node = stack_.pop()
        for p in node._parents:
            if p.requires_grad and p._id not in seen:
                seen[p._id] = p
                stack_.append(p)
    order = sorted(seen.values(), key=lambda t: t._id, reverse=True)
    root.grad = np.ones_like(root.data) if root.grad is None else root.grad + 1.0
    for node in order:
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if node._parents:
            # interior node: release graph and grad buffers
            node._backward = None
            node._parents = ()
            node.grad = None
    for node in order:
        if node.grad is not None:
            _check_finite(node.grad, f"gradient of {node.name or node.op}")


# -- free functions --------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands need ndim >= 2; reshape vectors first")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = Tensor._result(np.matmul(a.data, b.data), (a, b), "matmul")
    if out.requires_grad:

        def _bw(g):
            if a.requires_grad:
                _acc(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
            if b.requires_grad:
                if b.ndim == 2 and a.ndim > 2:
                    # batched input times a shared matrix: fold the batch axes
                    k, n = b.shape
                    _acc(b, a.data.reshape(-1, k).T @ g.reshape(-1, n))
                else:
                    _acc(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

        out._backward = _bw
    return out


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    out = Tensor._result(data, ts, "concat")
    if out.requires_grad:
        ax = axis % data.ndim
        bounds = np.cumsum([t.data.shape[ax] for t in ts])[:-1]

        def _bw(g):
            for t, piece in zip(ts, np.split(g, bounds, axis=ax)):
                _acc(t, piece)

        out._backward = _bw
    return out


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in ts], axis=axis)
    out = Tensor._result(data, ts, "stack")
    if out.requires_grad:
        ax = axis % data.ndim

        def _bw(g):
            for i, t in enumerate(ts):
                _acc(t, np.take(g, i, axis=ax))

        out._backward = _bw
    return out


def _unary(x: Tensor, value: np.ndarray, local_grad: Callable[[np.ndarray], np.ndarray], op: str) -> Tensor:
    out = Tensor._result(value, (x,), op)
    if out.requires_grad:
        out._backward = lambda g: _acc(x, g * local_grad(value))
    return out


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        y = np.exp(x.data)
    return _unary(x, y, lambda y: y, "exp")


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if (x.data <= 0).any():
        raise NonFiniteError("log of non-positive value")
    xd = x.data
    return _unary(x, np.log(xd), lambda _: 1.0 / xd, "log")


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.tanh(x.data), lambda y: 1.0 - y * y, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _unary(x, y, lambda y: y * (1.0 - y), "sigmoid")


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = (x.data > 0).astype(np.float64)
    return _unary(x, x.data * mask, lambda _: mask, "relu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor._result(y, (x,), "softmax")
    if out.requires_grad:
        out._backward = lambda g: _acc(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    out = Tensor._result(y, (x,), "log_softmax")
    if out.requires_grad:
        p = np.exp(y)
        out._backward = lambda g: _acc(x, g - p * g.sum(axis=axis, keepdims=True))
    return out


def normalize(x: Tensor, axis: int = -1) -> Tensor:
    """Scale to unit L2 norm along ``axis``; zero-norm slices are an error."""
    x = as_tensor(x)
    n = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    if (n == 0).any():
        raise ZeroDivisionError("cannot normalize a zero-norm vector")
    y = x.data / n
    out = Tensor._result(y, (x,), "normalize")
    if out.requires_grad:
        out._backward = lambda g: _acc(x, (g - y * (g * y).sum(axis=axis, keepdims=True)) / n)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm affine params must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor._result(xhat * gain.data + bias.data, (x, gain, bias), "layer_norm")
    if out.requires_grad:

        def _bw(g):
            if gain.requires_grad:
                _acc(gain, (g * xhat).reshape(-1, d).sum(axis=0))
            if bias.requires_grad:
                _acc(bias, g.reshape(-1, d).sum(axis=0))
            if x.requires_grad:
                gx = g * gain.data
                _acc(
                    x,
                    inv * (gx - gx.mean(axis=-1, keepdims=True)
                           - xhat * (gx * xhat).mean(axis=-1, keepdims=True)),
                )

        out._backward = _bw
    return out


def where_mask(x: Tensor, mask: np.ndarray, fill: float = -1e9) -> Tensor:
    """Replace entries where ``mask`` is False by ``fill`` (no gradient there)."""
    x = as_tensor(x)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    out = Tensor._result(np.where(mask, x.data, fill), (x,), "where_mask")
    if out.requires_grad:
        out._backward = lambda g: _acc(x, np.where(mask, g, 0.0))
    return out

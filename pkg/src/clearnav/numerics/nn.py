"""Parameter storage and the small set of layers every model here is built from."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    as_tensor,
    matmul,
    normalize,
    sigmoid,
    softmax,
    tanh,
    where_mask,
)
from .tensor import layer_norm as _layer_norm

__all__ = [
    "ParamStore",
    "linear",
    "layer_norm",
    "cosine_sim",
    "cosine_matrix",
    "lstm_step",
    "gru_step",
    "LSTMParams",
    "GRUParams",
    "attention",
]


class ParamStore:
    """Named trainable tensors.  Names are unique; gradients share parameter shapes."""

    def __init__(self, seed: int | None = None):
        self._params: dict[str, Tensor] = {}
        self.rng = np.random.default_rng(seed)

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def uniform(self, name: str, shape: tuple, scale: float | None = None) -> Tensor:
        fan_in = shape[-1] if len(shape) > 1 else shape[0]
        s = scale if scale is not None else 1.0 / np.sqrt(fan_in)
        return self.add(name, self.rng.uniform(-s, s, size=shape))

    def zeros(self, name: str, shape: tuple) -> Tensor:
        return self.add(name, np.zeros(shape))

    def ones(self, name: str, shape: tuple) -> Tensor:
        return self.add(name, np.ones(shape))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def subset(self, prefix: str) -> list[Tensor]:
        return [t for n, t in self._params.items() if n.startswith(prefix)]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        for n, arr in state.items():
            if n not in self._params:
                if strict:
                    raise KeyError(f"unexpected parameter {n!r}")
                continue
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != self._params[n].shape:
                raise ShapeError(f"{n}: checkpoint shape {arr.shape} != {self._params[n].shape}")
            self._params[n].data = arr.copy()
        if strict:
            missing = set(self._params) - set(state)
            if missing:
                raise KeyError(f"missing parameters: {sorted(missing)}")

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float((t.grad ** 2).sum()) for t in self._params.values() if t.grad is not None)))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x Wᵀ + b for x of shape (..., in) and W of shape (out, in)."""
    x = as_tensor(x)
    if x.shape[-1] != w.shape[-1]:
        raise ShapeError(f"linear: input dim {x.shape[-1]} != weight in-dim {w.shape[-1]}")
    vec = x.ndim == 1
    if vec:
        x = x.reshape(1, -1)
    y = matmul(x, w.T)
    if b is not None:
        y = y + b
    return y.reshape(-1) if vec else y


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    return _layer_norm(x, gain, bias, eps)


def cosine_sim(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError("cosine_sim needs two vectors of equal length")
    return (normalize(a) * normalize(b)).sum()


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise cosine similarity between the rows of ``a`` (n, d) and ``b`` (m, d)."""
    return matmul(normalize(a, axis=-1), normalize(b, axis=-1).T)


@dataclass
class LSTMParams:
    w_ih: Tensor  # (4H, in)
    w_hh: Tensor  # (4H, H)
    b: Tensor     # (4H,)

    @classmethod
    def create(cls, store: ParamStore, prefix: str, in_dim: int, hidden: int) -> "LSTMParams":
        return cls(
            store.uniform(f"{prefix}.w_ih", (4 * hidden, in_dim), 1.0 / np.sqrt(hidden)),
            store.uniform(f"{prefix}.w_hh", (4 * hidden, hidden), 1.0 / np.sqrt(hidden)),
            store.zeros(f"{prefix}.b", (4 * hidden,)),
        )

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]


def lstm_step(x: Tensor, state: tuple[Tensor, Tensor], p: LSTMParams) -> tuple[Tensor, Tensor]:
    """One LSTM cell update.  Gate layout in the stacked weights is (input, forget, cell, output)."""
    h, c = state
    H = p.hidden
    if h.shape[-1] != H or c.shape[-1] != H:
        raise ShapeError(f"lstm_step: state dim must be {H}")
    gates = linear(x, p.w_ih, p.b) + linear(h, p.w_hh)
    i = sigmoid(gates[..., 0:H])
    f = sigmoid(gates[..., H:2 * H])
    g = tanh(gates[..., 2 * H:3 * H])
    o = sigmoid(gates[..., 3 * H:4 * H])
    c_new = f * c + i * g
    h_new = o * tanh(c_new)
    return h_new, c_new


@dataclass
class GRUParams:
    w_ih: Tensor  # (3H, in)
    w_hh: Tensor  # (3H, H)
    b_ih: Tensor
    b_hh: Tensor

    @classmethod
    def create(cls, store: ParamStore, prefix: str, in_dim: int, hidden: int) -> "GRUParams":
        s = 1.0 / np.sqrt(hidden)
        return cls(
            store.uniform(f"{prefix}.w_ih", (3 * hidden, in_dim), s),
            store.uniform(f"{prefix}.w_hh", (3 * hidden, hidden), s),
            store.uniform(f"{prefix}.b_ih", (3 * hidden,), s),
            store.uniform(f"{prefix}.b_hh", (3 * hidden,), s),
        )

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]


def gru_step(xw: Tensor, h: Tensor, p: GRUParams) -> Tensor:
    """GRU update given the precomputed input projection ``xw = x W_ihᵀ + b_ih``.

    Gate layout is (reset, update, candidate).
    """
    H = p.hidden
    hw = linear(h, p.w_hh, p.b_hh)
    r = sigmoid(xw[..., 0:H] + hw[..., 0:H])
    z = sigmoid(xw[..., H:2 * H] + hw[..., H:2 * H])
    n = tanh(xw[..., 2 * H:] + r * hw[..., 2 * H:])
    return n + z * (h - n)


def attention(query: Tensor, keys: Tensor, w: Tensor, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Bilinear attention: weights = softmax_j(keys_j ᵀ W query); returns (weights, Σ weights·keys).

    ``keys`` is (B, J, dk), ``query`` is (B, dq), ``w`` is (dk, dq).
    """
    proj = linear(query, w)                       # (B, dk)
    scores = matmul(keys, proj.reshape(proj.shape[0], -1, 1)).reshape(keys.shape[0], keys.shape[1])
    if mask is not None:
        scores = where_mask(scores, mask)
    weights = softmax(scores, axis=-1)
    ctx = matmul(weights.reshape(weights.shape[0], 1, -1), keys).reshape(keys.shape[0], keys.shape[2])
    return weights, ctx


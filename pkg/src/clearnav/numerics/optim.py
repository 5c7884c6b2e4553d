"""Optimizers operating in place on parameter tensors."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .tensor import Tensor


def clip_grad_norm(params: Iterable[Tensor], max_norm: float) -> float:
    params = [p for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float((p.grad ** 2).sum()) for p in params)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad = p.grad * scale
    return total


class Optimizer:
    def __init__(self, params: Iterable[Tensor], lr: float):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("optimizer received duplicate parameters")
        self.base_lr = lr
        self.lr = lr
        self.t = 0
        self.state: dict[str, dict[str, np.ndarray]] = {p.name: {} for p in self.params}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        raise NotImplementedError


class AdamW(Optimizer):
    """Adam with decoupled weight decay and optional linear learning-rate decay to zero."""

    def __init__(self, params, lr=4e-5, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01,
                 total_steps: int | None = None):
        super().__init__(params, lr)
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.total_steps = total_steps

    def step(self) -> None:
        self.t += 1
        if self.total_steps:
            self.lr = self.base_lr * max(0.0, 1.0 - (self.t - 1) / self.total_steps)
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p in self.params:
            if p.grad is None:
                continue
            st = self.state[p.name]
            if not st:
                st["m"] = np.zeros_like(p.data)
                st["v"] = np.zeros_like(p.data)
            st["m"] = self.b1 * st["m"] + (1 - self.b1) * p.grad
            st["v"] = self.b2 * st["v"] + (1 - self.b2) * p.grad * p.grad
            update = (st["m"] / c1) / (np.sqrt(st["v"] / c2) + self.eps)
            p.data = p.data * (1.0 - self.lr * self.weight_decay) - self.lr * update


class RMSProp(Optimizer):
    def __init__(self, params, lr=1e-4, alpha=0.99, eps=1e-8):
        super().__init__(params, lr)
        self.alpha = alpha
        self.eps = eps

    def step(self) -> None:
        self.t += 1
        for p in self.params:
            if p.grad is None:
                continue
            st = self.state[p.name]
            if not st:
                st["sq"] = np.zeros_like(p.data)
            st["sq"] = self.alpha * st["sq"] + (1 - self.alpha) * p.grad * p.grad
            p.data = p.data - self.lr * p.grad / (np.sqrt(st["sq"]) + self.eps)

"""Fused recurrent kernels: a whole GRU scan is one graph node with hand-written BPTT."""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, _acc, as_tensor


def _sig(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def gru_scan(xw: Tensor, w_hh: Tensor, b_hh: Tensor, mask: np.ndarray | None = None,
             reverse: bool = False) -> Tensor:
    """Run a GRU over time given input projections ``xw`` of shape (B, T, 3H).

    Gate layout (reset, update, candidate) matches :func:`gru_step`.  Where
    ``mask[b, t]`` is False the state is carried through unchanged, so with
    ``reverse=True`` right-padding never leaks into valid positions.  Returns
    all hidden states, shape (B, T, H); the initial state is zero.
    """
    xw = as_tensor(xw)
    B, T, H3 = xw.shape
    H = w_hh.shape[1]
    if H3 != 3 * H or w_hh.shape != (3 * H, H) or b_hh.shape != (3 * H,):
        raise ShapeError("gru_scan: inconsistent GRU shapes")
    m = np.ones((B, T)) if mask is None else np.asarray(mask, dtype=np.float64)
    W = w_hh.data
    order = range(T - 1, -1, -1) if reverse else range(T)
    out = np.zeros((B, T, H))
    cache = {}
    h = np.zeros((B, H))
    for t in order:
        hw = h @ W.T + b_hh.data
        x = xw.data[:, t]
        r = _sig(x[:, :H] + hw[:, :H])
        z = _sig(x[:, H:2 * H] + hw[:, H:2 * H])
        hn = hw[:, 2 * H:]
        n = np.tanh(x[:, 2 * H:] + r * hn)
        h_new = n + z * (h - n)
        mt = m[:, t:t + 1]
        cache[t] = (h, r, z, n, hn, mt)
        h = mt * h_new + (1.0 - mt) * h
        out[:, t] = h
    res = Tensor._result(out, (xw, w_hh, b_hh), "gru_scan")
    if res.requires_grad:

        def _bw(g):
            dxw = np.zeros_like(xw.data)
            dW = np.zeros_like(W)
            db = np.zeros(3 * H)
            dh = np.zeros((B, H))
            for t in reversed(list(order)):
                h_prev, r, z, n, hn, mt = cache[t]
                dh = dh + g[:, t]
                dh_new = mt * dh
                dh_prev = (1.0 - mt) * dh + dh_new * z
                dn = dh_new * (1.0 - z)
                dz = dh_new * (h_prev - n)
                da_n = dn * (1.0 - n * n)
                da_r = da_n * hn * r * (1.0 - r)
                da_z = dz * z * (1.0 - z)
                dhw = np.concatenate([da_r, da_z, da_n * r], axis=1)
                dxw[:, t] = np.concatenate([da_r, da_z, da_n], axis=1)
                dW += dhw.T @ h_prev
                db += dhw.sum(axis=0)
                dh = dh_prev + dhw @ W
            _acc(xw, dxw)
            _acc(w_hh, dW)
            _acc(b_hh, db)

        res._backward = _bw
    return res

"""Language and visual encoders."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instrgen import CLS, PAD, SEP, VOCAB_SIZE
from .numerics import (
    GRUParams,
    ParamStore,
    ShapeError,
    Tensor,
    concat,
    layer_norm,
    linear,
    no_grad,
    relu,
)
from .numerics.rnn import gru_scan
from .worldgen import NUM_VIEWS


def pad_batch(seqs) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad token sequences; returns (ids (B, T), mask (B, T))."""
    if not seqs or any(len(s) == 0 for s in seqs):
        raise ValueError("cannot encode an empty instruction")
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


@dataclass
class EncodedText:
    cls: Tensor        # (B, d) sentence embeddings, the state at [CLS]
    states: Tensor     # (B, T, d) token states
    mask: np.ndarray   # (B, T)


class LangEncoder:
    """Token embeddings followed by a stack of bidirectional GRU layers.

    The output at position 0 (the ``[CLS]`` token) is the sentence embedding.
    """

    def __init__(self, store: ParamStore, dim: int = 64, layers: int = 2,
                 vocab_size: int = VOCAB_SIZE, prefix: str = "lang"):
        if dim % 2:
            raise ValueError("dim must be even (two GRU directions)")
        self.store = store
        self.dim = dim
        self.prefix = prefix
        self.vocab_size = vocab_size
        self.embedding = store.uniform(f"{prefix}.embedding", (vocab_size, dim), 0.5)
        h = dim // 2
        self.layers = []
        for layer in range(layers):
            self.layers.append((
                GRUParams.create(store, f"{prefix}.l{layer}.fwd", dim, h),
                GRUParams.create(store, f"{prefix}.l{layer}.bwd", dim, h),
            ))

    def params(self) -> list[Tensor]:
        return self.store.subset(self.prefix + ".")

    def encode(self, seqs) -> EncodedText:
        ids, mask = pad_batch(seqs)
        if ids.max() >= self.vocab_size or ids.min() < 0:
            raise ShapeError("token id outside the vocabulary")
        x = self.embedding[ids]                                  # (B, T, d)
        for fwd, bwd in self.layers:
            xw_f = linear(x, fwd.w_ih, fwd.b_ih)
            xw_b = linear(x, bwd.w_ih, bwd.b_ih)
            out_f = gru_scan(xw_f, fwd.w_hh, fwd.b_hh, mask)
            out_b = gru_scan(xw_b, bwd.w_hh, bwd.b_hh, mask, reverse=True)
            x = concat([out_f, out_b], axis=-1)
        return EncodedText(x[:, 0], x, mask)

    def token_embeddings(self) -> np.ndarray:
        return self.embedding.data

    def word_representations(self, chunk: int = 256) -> np.ndarray:
        """(V, d) contextual state of every token encoded alone as ``[CLS] t [SEP]``."""
        out = []
        with no_grad():
            for s in range(0, self.vocab_size, chunk):
                ids = [(CLS, t, SEP) for t in range(s, min(s + chunk, self.vocab_size))]
                out.append(self.encode(ids).states.data[:, 1])
        return np.concatenate(out, axis=0)


class VisEncoder:
    """v = W1 relu(W2 o);  v_hat = LayerNorm(v + o).  Output dim equals input dim."""

    def __init__(self, store: ParamStore, dim: int = 64, hidden: int | None = None,
                 prefix: str = "vis", init_scale: float | None = None):
        hidden = hidden or dim
        self.store = store
        self.dim = dim
        self.prefix = prefix
        self.w2 = store.uniform(f"{prefix}.w2", (hidden, dim), init_scale)
        self.w1 = store.uniform(f"{prefix}.w1", (dim, hidden), init_scale)
        self.gain = store.ones(f"{prefix}.ln_gain", (dim,))
        self.bias = store.zeros(f"{prefix}.ln_bias", (dim,))

    def params(self) -> list[Tensor]:
        return self.store.subset(self.prefix + ".")

    def encode(self, feats) -> Tensor:
        o = feats if isinstance(feats, Tensor) else Tensor(feats)
        if o.shape[-1] != self.dim:
            raise ShapeError(f"view feature dim {o.shape[-1]} != encoder dim {self.dim}")
        v = linear(relu(linear(o, self.w2)), self.w1)
        return layer_norm(v + o, self.gain, self.bias)


def pool_panorama(views: Tensor) -> Tensor:
    """Mean over the 36-view axis (second to last)."""
    if views.shape[-2] != NUM_VIEWS:
        raise ShapeError(f"expected {NUM_VIEWS} views, got {views.shape[-2]}")
    return views.mean(axis=views.ndim - 2)

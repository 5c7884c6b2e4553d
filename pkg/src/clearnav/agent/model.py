"""Attention-LSTM navigation decoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import (
    LSTMParams,
    ParamStore,
    ShapeError,
    Tensor,
    attention,
    concat,
    linear,
    lstm_step,
    matmul,
    tanh,
    where_mask,
)
from ..worldgen import ELEVATIONS, NUM_HEADINGS, NUM_VIEWS

ORIENT_DIM = 4


def view_orientations(heading=0.0) -> np.ndarray:
    """[cos θ, sin θ, cos φ, sin φ] for the 36 views, θ relative to ``heading``.

    ``heading`` may be a scalar (returns (36, 4)) or an array (B,) (returns (B, 36, 4)).
    """
    m = np.arange(NUM_VIEWS)
    theta = (m % NUM_HEADINGS) * (2 * np.pi / NUM_HEADINGS)
    phi = np.asarray(ELEVATIONS)[m // NUM_HEADINGS]
    rel = theta - np.asarray(heading, dtype=np.float64)[..., None]
    phi = np.broadcast_to(phi, rel.shape)
    return np.stack([np.cos(rel), np.sin(rel), np.cos(phi), np.sin(phi)], axis=-1)


def view_features(panorama, vis_encoder, heading=0.0) -> tuple[Tensor, Tensor]:
    """Encode raw views and append orientation; returns (f, v_hat).

    ``panorama`` is (36, D) or (B, 36, D) raw features.
    """
    raw = panorama if isinstance(panorama, Tensor) else Tensor(np.asarray(panorama, dtype=np.float64))
    if raw.shape[-2] != NUM_VIEWS:
        raise ShapeError(f"expected {NUM_VIEWS} views, got {raw.shape[-2]}")
    v_hat = vis_encoder.encode(raw)
    orient = view_orientations(heading)
    if orient.ndim < raw.ndim:
        orient = np.broadcast_to(orient, raw.shape[:-1] + (ORIENT_DIM,))
    return concat([v_hat, Tensor(orient)], axis=-1), v_hat


@dataclass
class AgentState:
    h: Tensor          # LSTM output h_t
    h_hat: Tensor      # instruction-aware context
    c: Tensor          # LSTM cell
    a_prev: np.ndarray  # (B, 4) orientation of the previous action


@dataclass
class StepOutput:
    logits: Tensor     # (B, K), padded candidates at -1e9
    state: AgentState
    rho: Tensor        # (B, T) text attention
    gamma: Tensor      # (B, 36) view attention
    value: Tensor      # (B,)


class Decoder:
    """One decoding step:

    f̂ = Σ_m γ_m f_m,  γ = softmax(f_mᵀ W_f ĥ_{t-1})
    h_t, c_t = LSTM([f̂; emb(a_{t-1})], (ĥ_{t-1}, c_{t-1}))
    u_t = Σ_j ρ_j ŵ_j,  ρ = softmax(ŵ_jᵀ W_l h_t)
    ĥ_t = tanh(W_m [u_t; h_t])
    logit_k = g_kᵀ W_a ĥ_t
    """

    def __init__(self, store: ParamStore, feat_dim: int, text_dim: int, hidden: int = 128,
                 action_dim: int = 128, prefix: str = "nav"):
        self.store = store
        self.prefix = prefix
        self.feat_dim = feat_dim
        self.text_dim = text_dim
        self.hidden = hidden
        s_h = 1.0 / np.sqrt(hidden)
        self.w_f = store.uniform(f"{prefix}.w_f", (feat_dim, hidden), s_h)
        self.w_act = store.uniform(f"{prefix}.w_act", (action_dim, ORIENT_DIM), 0.5)
        self.b_act = store.zeros(f"{prefix}.b_act", (action_dim,))
        self.lstm = LSTMParams.create(store, f"{prefix}.lstm", feat_dim + action_dim, hidden)
        self.w_l = store.uniform(f"{prefix}.w_l", (text_dim, hidden), s_h)
        self.w_m = store.uniform(f"{prefix}.w_m", (hidden, text_dim + hidden), 1.0 / np.sqrt(text_dim + hidden))
        self.w_a = store.uniform(f"{prefix}.w_a", (feat_dim, hidden), s_h)
        self.w_v = store.uniform(f"{prefix}.w_v", (1, hidden), s_h)
        self.b_v = store.zeros(f"{prefix}.b_v", (1,))

    def params(self) -> list[Tensor]:
        return self.store.subset(self.prefix + ".")

    def init_state(self, batch: int) -> AgentState:
        z = np.zeros((batch, self.hidden))
        return AgentState(Tensor(z), Tensor(z.copy()), Tensor(z.copy()), np.zeros((batch, ORIENT_DIM)))

    def step(self, state: AgentState, f: Tensor, tokens: Tensor, token_mask: np.ndarray,
             g: Tensor, cand_mask: np.ndarray) -> StepOutput:
        B = f.shape[0]
        if g.shape[1] == 0 or not np.asarray(cand_mask).any(axis=1).all():
            raise ShapeError("every batch row needs at least one candidate")
        if f.shape[-1] != self.feat_dim or g.shape[-1] != self.feat_dim:
            raise ShapeError(f"feature dim must be {self.feat_dim}")
        gamma, f_hat = attention(state.h_hat, f, self.w_f)
        a_emb = tanh(linear(Tensor(state.a_prev), self.w_act, self.b_act))
        h, c = lstm_step(concat([f_hat, a_emb], axis=-1), (state.h_hat, state.c), self.lstm)
        rho, u = attention(h, tokens, self.w_l, token_mask)
        h_hat = tanh(linear(concat([u, h], axis=-1), self.w_m))
        proj = linear(h_hat, self.w_a)                                   # (B, feat)
        logits = matmul(g, proj.reshape(B, -1, 1)).reshape(B, g.shape[1])
        logits = where_mask(logits, np.asarray(cand_mask, dtype=bool))
        value = linear(h_hat, self.w_v, self.b_v).reshape(B)
        return StepOutput(logits, AgentState(h, h_hat, c, state.a_prev), rho, gamma, value)


def decoder_step(decoder: Decoder, state: AgentState, f: Tensor, tokens: Tensor, token_mask,
                 g: Tensor, cand_mask) -> tuple[Tensor, AgentState, Tensor]:
    out = decoder.step(state, f, tokens, token_mask, g, cand_mask)
    return out.logits, out.state, out.rho

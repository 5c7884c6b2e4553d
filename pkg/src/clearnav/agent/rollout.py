"""Batched rollouts and the imitation / actor-critic losses."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..encoders import EncodedText, LangEncoder, VisEncoder
from ..numerics import Tensor, concat, log_softmax, no_grad, softmax
from ..worldgen import NUM_VIEWS
from .episode import Candidate, Episode, discounted_returns
from .model import ORIENT_DIM, Decoder, view_features

MODES = ("teacher", "sample", "greedy")


@dataclass
class Rollout:
    episodes: list[Episode]
    logp: list[Tensor] = field(default_factory=list)       # (B,) log-prob of the taken action
    values: list[Tensor] = field(default_factory=list)     # (B,)
    entropy: list[Tensor] = field(default_factory=list)    # (B,)
    active: list[np.ndarray] = field(default_factory=list)  # (B,) bool

    @property
    def steps(self) -> int:
        return len(self.active)

    def mask(self) -> np.ndarray:
        return np.stack(self.active, axis=1).astype(np.float64)     # (B, T)


class Navigator:
    """Language encoder, visual encoder and decoder sharing one parameter store."""

    def __init__(self, lang: LangEncoder, vis: VisEncoder, decoder: Decoder):
        self.lang = lang
        self.vis = vis
        self.decoder = decoder

    def candidate_batch(self, episodes: list[Episode]):
        cands = [e.candidates() for e in episodes]
        K = max(len(c) for c in cands)
        B = len(episodes)
        views = np.full((B, K), NUM_VIEWS, dtype=np.int64)
        orient = np.zeros((B, K, ORIENT_DIM))
        mask = np.zeros((B, K), dtype=bool)
        for b, cs in enumerate(cands):
            for k, c in enumerate(cs):
                views[b, k] = c.view
                orient[b, k] = c.orient
                mask[b, k] = True
        return cands, views, orient, mask

    def rollout(self, episodes: list[Episode], text: EncodedText, mode: str,
                rng: np.random.Generator | None = None, record: bool = False) -> Rollout:
        if mode not in MODES:
            raise ValueError(f"unknown rollout mode {mode!r}")
        if mode == "sample" and rng is None:
            raise ValueError("sampling needs an rng")
        B = len(episodes)
        out = Rollout(episodes)
        state = self.decoder.init_state(B)
        rows = np.arange(B)
        horizon = max(e.horizon for e in episodes)
        for _ in range(horizon):
            active = np.array([not e.done for e in episodes])
            if not active.any():
                break
            raw = np.stack([e.env.all_features()[e.node] for e in episodes])
            heading = np.array([e.heading for e in episodes])
            f, v_hat = view_features(raw, self.vis, heading)
            cands, views, corient, cmask = self.candidate_batch(episodes)
            pad = Tensor(np.zeros((B, 1, v_hat.shape[-1])))
            g_vis = concat([v_hat, pad], axis=1)[rows[:, None], views]
            g = concat([g_vis, Tensor(corient)], axis=-1)
            step = self.decoder.step(state, f, text.states, text.mask, g, cmask)
            logp_all = log_softmax(step.logits, axis=-1)
            p = np.exp(logp_all.data)
            if mode == "teacher":
                act = np.array([0 if e.done else e.teacher() for e in episodes])
            elif mode == "greedy":
                act = np.argmax(np.where(cmask, logp_all.data, -np.inf), axis=1)
            else:
                act = np.array([int(rng.choice(len(pb), p=pb / pb.sum())) for pb in p])
            out.logp.append(logp_all[rows, act])
            out.values.append(step.value)
            out.entropy.append(-(softmax(step.logits, axis=-1) * logp_all).sum(axis=-1))
            out.active.append(active)
            a_prev = np.zeros((B, ORIENT_DIM))
            for b, e in enumerate(episodes):
                if not active[b]:
                    continue
                cand: Candidate = cands[b][int(act[b])]
                a_prev[b] = cand.orient
                if record:
                    e.attention.append(step.rho.data[b, : int(text.mask[b].sum())].copy())
                    e.records.append({"probs": p[b, : len(cands[b])].tolist(), "action": int(act[b])})
                e.step(cand)
            step.state.a_prev = a_prev
            state = step.state
        return out


def il_loss(rollout: Rollout) -> Tensor:
    """Σ_t −log p(a*_t) over the teacher-forced rollout, averaged over the batch."""
    B = len(rollout.episodes)
    total = None
    for logp, active in zip(rollout.logp, rollout.active):
        term = -(logp * active.astype(np.float64)).sum()
        total = term if total is None else total + term
    return total * (1.0 / B)


def a2c_update(rollout: Rollout, gamma: float = 0.9, value_coef: float = 0.5,
               entropy_coef: float = 0.01) -> tuple[Tensor, dict]:
    """Advantage actor-critic loss on a completed sampled rollout, averaged over active steps."""
    if not rollout.episodes or rollout.steps == 0:
        raise ValueError("a2c_update needs a non-empty batch")
    B, T = len(rollout.episodes), rollout.steps
    mask = rollout.mask()
    returns = np.zeros((B, T))
    for b, e in enumerate(rollout.episodes):
        if not e.done:
            raise ValueError("rollouts must be complete")
        R = discounted_returns(e.rewards, gamma)
        returns[b, : len(R)] = R
    policy = value = ent = None
    for t in range(T):
        m = mask[:, t]
        adv = (returns[:, t] - rollout.values[t].data) * m
        p_t = -(rollout.logp[t] * adv).sum()
        diff = (rollout.values[t] - returns[:, t]) * m
        v_t = (diff * diff).sum() * 0.5
        e_t = (rollout.entropy[t] * m).sum()
        policy = p_t if policy is None else policy + p_t
        value = v_t if value is None else value + v_t
        ent = e_t if ent is None else ent + e_t
    n = float(mask.sum())
    loss = (policy + value * value_coef - ent * entropy_coef) * (1.0 / n)
    stats = {
        "policy": policy.item() / n,
        "value": value.item() / n,
        "entropy": ent.item() / n,
        "reward": float(np.mean([sum(e.rewards) for e in rollout.episodes])),
    }
    return loss, stats


def greedy_trajectories(nav: Navigator, episodes: list[Episode], batch_size: int = 32,
                        record: bool = False) -> list[Episode]:
    with no_grad():
        for start in range(0, len(episodes), batch_size):
            chunk = episodes[start:start + batch_size]
            text = nav.lang.encode([e.tokens for e in chunk])
            nav.rollout(chunk, text, "greedy", record=record)
    return episodes

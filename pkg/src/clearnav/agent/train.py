"""Navigation training loop: L_nav = rl_weight * L_RL + lambda * L_IL."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..encoders import LangEncoder, VisEncoder
from ..instrgen import Instruction
from ..metrics import EpisodeResult, score_episode
from ..numerics import (
    AdamW,
    NonFiniteError,
    ParamStore,
    RMSProp,
    backward,
    clip_grad_norm,
)
from ..worldgen import EnvGraph, Path
from .episode import Episode
from .model import ORIENT_DIM, Decoder
from .rollout import Navigator, a2c_update, greedy_trajectories, il_loss

log = logging.getLogger(__name__)


class TrainingDivergence(RuntimeError):
    pass


@dataclass
class NavConfig:
    iterations: int = 400
    batch_size: int = 16
    hidden: int = 128
    action_dim: int = 128
    text_dim: int = 64
    lang_layers: int = 2
    lr_lang: float = 4e-4
    lr: float = 1e-3
    il_weight: float = 0.4          # lambda
    rl_weight: float = 1.0          # 0 gives pure imitation
    gamma: float = 0.9
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    clip_norm: float = 5.0
    ndtw_reward_clip: bool = False
    seed: int = 0
    probe_every: int = 0            # dev-probe SR every n iterations (0 = never)
    probe_size: int = 32

    def validate(self) -> None:
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("iterations must be >= 0 and batch_size >= 1")
        if self.il_weight < 0 or self.rl_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


@dataclass(frozen=True)
class NavItem:
    """One navigation episode specification: an instruction for a path."""

    path: Path
    instruction: Instruction
    split: str = "train-seen"

    def episode(self, envs: dict[str, EnvGraph], clip: bool = False) -> Episode:
        return Episode(envs[self.path.env_id], self.path, self.instruction.tokens,
                       self.instruction.language, self.instruction.instr_id, self.split,
                       ndtw_reward_clip=clip)


def build_navigator(cfg: NavConfig, feature_dim: int, store: ParamStore | None = None) -> Navigator:
    store = store if store is not None else ParamStore(cfg.seed)
    lang = LangEncoder(store, cfg.text_dim, cfg.lang_layers)
    vis = VisEncoder(store, feature_dim)
    dec = Decoder(store, feature_dim + ORIENT_DIM, cfg.text_dim, cfg.hidden, cfg.action_dim)
    return Navigator(lang, vis, dec)


def nav_loss(l_rl, l_il, rl_weight: float, il_weight: float):
    """Weighted combination; a zero weight drops the term entirely."""
    total = None
    if rl_weight and l_rl is not None:
        total = l_rl * rl_weight
    if il_weight and l_il is not None:
        term = l_il * il_weight
        total = term if total is None else total + term
    return total


def evaluate(nav: Navigator, items: Sequence[NavItem], envs: dict[str, EnvGraph],
             batch_size: int = 32, record: bool = False) -> tuple[list[EpisodeResult], list[Episode]]:
    episodes = [it.episode(envs) for it in items]
    greedy_trajectories(nav, episodes, batch_size, record=record)
    results = [
        score_episode(e.env, e.path.nodes, e.trajectory, path_id=e.path.path_id,
                      language=e.language, split=e.split)
        for e in episodes
    ]
    return results, episodes


def train_nav(cfg: NavConfig, items: Sequence[NavItem], envs: dict[str, EnvGraph],
              init: dict[str, np.ndarray] | None = None, dev_items: Sequence[NavItem] = (),
              log_path=None) -> tuple[Navigator, list[dict]]:
    """Train a navigator; ``init`` may hold pretrained ``lang.*`` / ``vis.*`` weights."""
    cfg.validate()
    if not items:
        raise ValueError("no training items")
    feature_dim = next(iter(envs.values())).all_features().shape[-1]
    store = ParamStore(cfg.seed)
    nav = build_navigator(cfg, feature_dim, store)
    if init:
        unknown = [k for k in init if k not in store]
        if unknown:
            raise KeyError(f"checkpoint has unknown parameters: {unknown[:3]}")
        store.load_state_dict(init, strict=False)
    opt_lang = AdamW(nav.lang.params(), lr=cfg.lr_lang, total_steps=max(cfg.iterations, 1))
    opt_rest = RMSProp(nav.vis.params() + nav.decoder.params(), lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 7001])
    sample_rng = np.random.default_rng([cfg.seed, 7002])
    history: list[dict] = []
    fh = open(log_path, "w") if log_path else None
    if fh:
        fh.write(json.dumps({"schema_version": 1, "kind": "nav-log", "config": asdict(cfg)}) + "\n")
    try:
        for it in range(cfg.iterations):
            t0 = time.perf_counter()
            idx = rng.choice(len(items), size=min(cfg.batch_size, len(items)), replace=False)
            batch = [items[int(i)] for i in np.sort(idx)]
            text = nav.lang.encode([b.instruction.tokens for b in batch])
            l_il = l_rl = None
            rec: dict = {"iter": it}
            if cfg.il_weight:
                eps = [b.episode(envs, cfg.ndtw_reward_clip) for b in batch]
                l_il = il_loss(nav.rollout(eps, text, "teacher"))
                rec["il"] = l_il.item()
            if cfg.rl_weight:
                eps = [b.episode(envs, cfg.ndtw_reward_clip) for b in batch]
                l_rl, stats = a2c_update(nav.rollout(eps, text, "sample", sample_rng),
                                         cfg.gamma, cfg.value_coef, cfg.entropy_coef)
                rec.update(rl=l_rl.item(), **stats)
            loss = nav_loss(l_rl, l_il, cfg.rl_weight, cfg.il_weight)
            if loss is None:
                raise ValueError("both loss weights are zero")
            if not np.isfinite(loss.item()):
                raise TrainingDivergence(f"non-finite loss at iteration {it}")
            store.zero_grad()
            try:
                backward(loss)
            except NonFiniteError as exc:
                raise TrainingDivergence(str(exc)) from exc
            rec["loss"] = loss.item()
            rec["grad_norm"] = clip_grad_norm([t for _, t in store.items()], cfg.clip_norm)
            opt_lang.step()
            opt_rest.step()
            if cfg.probe_every and dev_items and (it + 1) % cfg.probe_every == 0:
                res, _ = evaluate(nav, list(dev_items)[: cfg.probe_size], envs)
                rec["dev_sr"] = float(np.mean([r.SR for r in res]))
            rec["seconds"] = round(time.perf_counter() - t0, 4)
            history.append(rec)
            if fh:
                fh.write(json.dumps({k: v for k, v in rec.items()}) + "\n")
            if it % 50 == 0:
                log.info("iter %d loss %.4f", it, rec["loss"])
    finally:
        if fh:
            fh.close()
    return nav, history


def config_dict(cfg: NavConfig) -> dict:
    return asdict(cfg)

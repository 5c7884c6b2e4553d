"""Stage runners: language pretraining, pair mining, visual pretraining, navigation, evaluation."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from ..agent import NavItem, Navigator, train_nav
from ..agent.train import evaluate
from ..contrastive import (
    ObjectSampler,
    PathPair,
    lang_loss,
    mine_path_pairs,
    object_filter,
    sample_instruction_pair,
    similarity_filter,
    visual_loss,
)
from ..encoders import LangEncoder, VisEncoder, pool_panorama
from ..metrics import EpisodeResult, EvalReport, aggregate
from ..numerics import AdamW, ParamStore, RMSProp, Tensor, backward, clip_grad_norm, no_grad
from .config import ExperimentConfig, LangPretrainConfig, VisPretrainConfig
from .data import Corpus, build_corpus, stream_seed

log = logging.getLogger(__name__)

EVAL_SPLITS = ("val-seen", "val-unseen")


def state_digest(state: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(state):
        h.update(name.encode())
        h.update(np.ascontiguousarray(state[name], dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def _prefixed(store: ParamStore, prefix: str) -> dict[str, np.ndarray]:
    return {k: v for k, v in store.state_dict().items() if k.startswith(prefix)}


# -- stage 1: language ----------------------------------------------------------
def pretrain_lang(corpus: Corpus, cfg: LangPretrainConfig, seed: int) -> tuple[dict, list[dict]]:
    """Contrastive pretraining of the instruction encoder on training paths."""
    store = ParamStore(stream_seed(seed, "lang-init"))
    enc = LangEncoder(store, cfg.dim, cfg.layers)
    rng = np.random.default_rng(stream_seed(seed, "lang-train"))
    by_path = corpus.by_path()
    pids = corpus.path_ids("train")
    n = min(cfg.batch_pairs, len(pids))
    if n < 2:
        raise ValueError("language pretraining needs at least two training paths")
    opt = AdamW(enc.params(), lr=cfg.lr, total_steps=max(cfg.iterations, 1))
    history = []
    for it in range(cfg.iterations):
        chosen = rng.choice(len(pids), size=n, replace=False)
        pairs = [sample_instruction_pair(by_path[pids[int(k)]], cfg.strategy, rng) for k in chosen]
        out = enc.encode([a.tokens for a, _ in pairs] + [b.tokens for _, b in pairs])
        loss = lang_loss(out.cls[:n], out.cls[n:], cfg.tau, cfg.symmetric_loss)
        store.zero_grad()
        backward(loss)
        clip_grad_norm(enc.params(), 5.0)
        opt.step()
        history.append({"iter": it, "lang_loss": loss.item()})
    return _prefixed(store, "lang."), history


def load_lang(state: dict, dim: int = 64, layers: int = 2) -> LangEncoder:
    store = ParamStore(0)
    enc = LangEncoder(store, dim, layers)
    store.load_state_dict(state)
    return enc


def embed_instructions(enc: LangEncoder, instructions, chunk: int = 128) -> np.ndarray:
    out = []
    with no_grad():
        for s in range(0, len(instructions), chunk):
            out.append(enc.encode([i.tokens for i in instructions[s:s + chunk]]).cls.data)
    return np.concatenate(out, axis=0)


def retrieval_accuracy(enc: LangEncoder, corpus: Corpus, n: int = 16, trials: int = 40,
                       cross_language: bool = False, seed: int = 0,
                       splits: Sequence[str] = EVAL_SPLITS) -> float:
    """In-batch positive retrieval on held-out paths.

    Each batch holds ``n`` instruction pairs from distinct paths; anchor i is
    correct when its most similar of the other 2n-1 embeddings is its partner.
    With ``cross_language`` every pair spans two different languages.
    """
    rng = np.random.default_rng(stream_seed(seed, "retrieval"))
    by_path = corpus.by_path()
    pids = [p for s in splits for p in corpus.path_ids(s)]
    if len(pids) < n:
        raise ValueError(f"need {n} held-out paths, have {len(pids)}")
    hits = total = 0
    for _ in range(trials):
        chosen = rng.choice(len(pids), size=n, replace=False)
        a_side, b_side = [], []
        for k in chosen:
            pool = by_path[pids[int(k)]]
            while True:
                i, j = rng.choice(len(pool), size=2, replace=False)
                if not cross_language or pool[i].language != pool[j].language:
                    break
            a_side.append(pool[i])
            b_side.append(pool[j])
        emb = embed_instructions(enc, a_side + b_side)
        emb = emb / np.linalg.norm(emb, axis=1, keepdims=True)
        sims = emb[:n] @ emb.T
        sims[np.arange(n), np.arange(n)] = -np.inf
        hits += int((sims.argmax(axis=1) == n + np.arange(n)).sum())
        total += n
    return hits / total


# -- mining ------------------------------------------------------------------------
def mine(corpus: Corpus, lang_state: dict, dim: int = 64, layers: int = 2) -> list[PathPair]:
    enc = load_lang(lang_state, dim, layers)
    train = corpus.split_instructions("train")
    emb = embed_instructions(enc, train)
    train_paths = {p: corpus.paths[p] for p in corpus.path_ids("train")}
    return mine_path_pairs(train, emb, train_paths)


# -- stage 1: visual ----------------------------------------------------------------
def _path_features(corpus: Corpus, paths: Sequence) -> np.ndarray:
    return np.stack([corpus.envs[p.env_id].all_features()[p.nodes] for p in paths])


def pretrain_vis(corpus: Corpus, pairs: Sequence[PathPair], cfg: VisPretrainConfig,
                 seed: int) -> tuple[dict, list[dict]]:
    """Contrastive pretraining of the view encoder on mined path pairs."""
    dim = next(iter(corpus.envs.values())).spec.feature_dim
    store = ParamStore(stream_seed(seed, "vis-init"))
    enc = VisEncoder(store, dim)
    kept = similarity_filter(pairs, cfg.similarity_threshold)
    uniq: dict[tuple[str, str], PathPair] = {}
    for pp in kept:
        uniq.setdefault((pp.p.path_id, pp.q.path_id), pp)
    groups: dict[int, list[PathPair]] = {}
    for key in sorted(uniq):
        pp = uniq[key]
        groups.setdefault(len(pp.p), []).append(pp)
    groups = {L: g for L, g in groups.items() if len({pp.p.path_id for pp in g}) >= 2}
    if not groups:
        raise ValueError("no length group holds two distinct pairs")
    lengths = sorted(groups)
    weights = np.array([len(groups[L]) for L in lengths], dtype=np.float64)
    rng = np.random.default_rng(stream_seed(seed, "vis-train"))
    sampler = ObjectSampler(cfg.constraint, cfg.sample_size, stream_seed(seed, "vis-objects"))
    opt = RMSProp(enc.params(), lr=cfg.lr)
    history = []
    for it in range(cfg.iterations):
        L = lengths[int(rng.choice(len(lengths), p=weights / weights.sum()))]
        group = groups[L]
        order = rng.permutation(len(group))
        batch, seen = [], set()
        for k in order:
            pp = group[int(k)]
            if pp.p.path_id in seen:
                continue
            seen.add(pp.p.path_id)
            batch.append(pp)
            if len(batch) == cfg.batch_pairs:
                break
        classes = sampler.sample()
        mask = np.stack([object_filter(pp, corpus.envs, classes) for pp in batch])
        rec = {"iter": it, "length": L, "anchors": int(mask.sum())}
        p = pool_panorama(enc.encode(Tensor(_path_features(corpus, [pp.p for pp in batch]))))
        q = pool_panorama(enc.encode(Tensor(_path_features(corpus, [pp.q for pp in batch]))))
        loss = visual_loss(p, q, mask, cfg.tau)
        if loss is None:
            rec["vis_loss"] = None
            history.append(rec)
            continue
        store.zero_grad()
        backward(loss)
        clip_grad_norm(enc.params(), 5.0)
        opt.step()
        rec["vis_loss"] = loss.item() / max(int(mask.sum()), 1)
        history.append(rec)
    return _prefixed(store, "vis."), history


# -- stage 2: navigation and evaluation ----------------------------------------------
def run_nav(corpus: Corpus, cfg: ExperimentConfig, init: dict | None, log_path=None):
    nav_cfg = replace(cfg.nav, seed=stream_seed(cfg.seed, "nav"))
    dev = corpus.items("val-seen")
    return train_nav(nav_cfg, corpus.items("train"), corpus.envs, init=init, dev_items=dev,
                     log_path=log_path)


def nav_state(nav: Navigator) -> dict[str, np.ndarray]:
    return nav.decoder.store.state_dict()


def evaluate_items(nav: Navigator, items: Sequence[NavItem], corpus: Corpus, batch: int = 32,
                   workers: int = 1, record: bool = False):
    """Greedy rollouts; returns (EpisodeResults, episodes) in input order."""
    chunks = [list(items[s:s + batch]) for s in range(0, len(items), batch)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: evaluate(nav, c, corpus.envs, batch, record), chunks))
    else:
        parts = [evaluate(nav, c, corpus.envs, batch, record) for c in chunks]
    results = [r for res, _ in parts for r in res]
    episodes = [e for _, eps in parts for e in eps]
    return results, episodes


def split_reports(results: Sequence[EpisodeResult], checkpoint: str) -> dict[str, EvalReport]:
    out = {}
    for split in EVAL_SPLITS:
        rows = [r for r in results if r.split == split]
        if rows:
            out[split] = aggregate(rows, checkpoint)
    return out


def report_bytes(reports: dict[str, EvalReport]) -> bytes:
    return json.dumps({k: v.to_dict() for k, v in sorted(reports.items())}, sort_keys=True).encode()


@dataclass
class PipelineResult:
    config: ExperimentConfig
    corpus: Corpus
    lang_state: dict | None
    vis_state: dict | None
    pairs: list
    nav: Navigator
    reports: dict[str, EvalReport]
    episodes: list
    histories: dict[str, list] = field(default_factory=dict)
    seconds: dict[str, float] = field(default_factory=dict)


def run_pipeline(cfg: ExperimentConfig, corpus: Corpus | None = None, lang_state: dict | None = None,
                 pairs: list | None = None, workers: int = 1, runlog=None) -> PipelineResult:
    """Run every stage for ``cfg``; precomputed stage outputs may be passed in to share work."""
    cfg.validate()
    timer = {}
    hist: dict[str, list] = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        out = fn()
        timer[name] = time.perf_counter() - t0
        if runlog is not None:
            runlog.append("stage", name=name, seconds=round(timer[name], 3))
        return out

    corpus = corpus or stage("corpus", lambda: build_corpus(cfg))
    if cfg.lang.enabled and lang_state is None:
        lang_state, hist["lang"] = stage("pretrain-lang", lambda: pretrain_lang(corpus, cfg.lang, cfg.seed))
    vis_state = None
    if cfg.vis.enabled:
        if lang_state is None:
            raise ValueError("visual pretraining needs a language encoder for mining")
        if pairs is None:
            pairs = stage("mine-pairs", lambda: mine(corpus, lang_state, cfg.lang.dim, cfg.lang.layers))
        vis_state, hist["vis"] = stage("pretrain-vis", lambda: pretrain_vis(corpus, pairs, cfg.vis, cfg.seed))
    init = {**(lang_state if cfg.lang.enabled else {}), **(vis_state or {})}
    nav, hist["nav"] = stage("train-nav", lambda: run_nav(corpus, cfg, init or None))
    ckpt = state_digest(nav_state(nav))
    items = [it for s in EVAL_SPLITS for it in corpus.items(s)]
    results, episodes = stage("eval", lambda: evaluate_items(nav, items, corpus, cfg.eval_batch, workers))
    reports = split_reports(results, ckpt)
    if runlog is not None:
        runlog.append("losses", **{k: v for k, v in hist.items()})
        runlog.append("report", **{k: v.to_dict() for k, v in reports.items()})
    return PipelineResult(cfg, corpus, lang_state, vis_state, pairs or [], nav, reports, episodes, hist, timer)


class RunLog:
    """Append-only JSONL provenance log."""

    def __init__(self, path, cfg: ExperimentConfig | None = None):
        self.path = FsPath(path)
        self.t0 = time.perf_counter()
        if cfg is not None:
            self.append("config", config=cfg.to_dict())

    def append(self, event: str, **data) -> None:
        rec = {"schema_version": 1, "event": event,
               "wall_clock": round(time.perf_counter() - self.t0, 3), **data}
        with open(self.path, "a") as fh:
            fh.write(json.dumps(rec, default=float) + "\n")

    def hash_artifact(self, path) -> str:
        digest = hashlib.sha256(FsPath(path).read_bytes()).hexdigest()
        self.append("artifact", path=str(path), sha256=digest)
        return digest

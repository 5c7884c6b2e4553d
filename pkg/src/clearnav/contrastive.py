"""Positive-pair construction and the two contrastive objectives.

Language side: two instructions of the same path form a positive pair; the
other 2(N-1) sentence embeddings in the batch are negatives.

Visual side: paths from different environments whose instructions are most
similar are paired step by step; a step counts as an anchor only when both
panoramas contain one of the object classes sampled for the iteration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .instrgen import LANGUAGES, Instruction
from .numerics import (
    Tensor,
    concat,
    log_softmax,
    matmul,
    normalize,
    where_mask,
)
from .worldgen import NUM_CLASSES, EnvGraph, Path

log = logging.getLogger(__name__)

STRATEGIES = ("multi", "mono", "L1+L2", "L1+L3", "L2+L3")
CONSTRAINT_MODES = ("sampled-10", "fixed-27", "off")


class PairingError(ValueError):
    pass


def strategy_languages(strategy: str) -> tuple[str, ...]:
    if strategy in ("multi", "mono"):
        return LANGUAGES
    if strategy in STRATEGIES:
        return tuple(strategy.split("+"))
    raise PairingError(f"unknown pairing strategy {strategy!r}")


def sample_instruction_pair(instructions: Sequence[Instruction], strategy: str,
                            rng: np.random.Generator) -> tuple[Instruction, Instruction]:
    """Two distinct instructions of one path, respecting the strategy's language constraint."""
    langs = strategy_languages(strategy)
    pool = [ins for ins in instructions if ins.language in langs]
    if len({ins.path_id for ins in pool}) > 1:
        raise PairingError("instructions must belong to a single path")
    if strategy == "mono":
        by_lang = {lang: [i for i in pool if i.language == lang] for lang in langs}
        ok = [lang for lang in langs if len(by_lang[lang]) >= 2]
        if not ok:
            raise PairingError("mono pairing needs two instructions in one language")
        pool = by_lang[ok[int(rng.integers(len(ok)))]]
    if len(pool) < 2:
        raise PairingError(f"strategy {strategy!r} has no valid pair")
    a, b = rng.choice(len(pool), size=2, replace=False)
    return pool[int(a)], pool[int(b)]


def lang_loss(w: Tensor, u: Tensor, tau: float = 0.1, symmetric: bool = False) -> Tensor:
    """Contrastive loss over N positive pairs of sentence embeddings.

    The 2N embeddings are stacked as [w_1..w_N, u_1..u_N].  Anchor w_i is
    scored against every stacked embedding except itself; its positive is u_i.
    Returns the sum over the N anchors (a second pass with u-side anchors is
    added when ``symmetric``).
    """
    N = w.shape[0]
    if N < 2:
        raise PairingError("lang_loss needs N >= 2 pairs")
    if u.shape != w.shape:
        raise ValueError("w and u must have the same shape")
    allv = normalize(concat([w, u], axis=0), axis=-1)           # (2N, d)
    anchors = allv[:N]
    sims = matmul(anchors, allv.T) * (1.0 / tau)                  # (N, 2N)
    keep = np.ones((N, 2 * N), dtype=bool)
    keep[np.arange(N), np.arange(N)] = False
    logp = log_softmax(where_mask(sims, keep, -1e9), axis=-1)
    loss = -logp[np.arange(N), N + np.arange(N)].sum()
    if symmetric:
        loss = loss + lang_loss(u, w, tau, symmetric=False)
    return loss


def visual_loss(p: Tensor, q: Tensor, mask: np.ndarray, tau: float = 0.1) -> Tensor | None:
    """Contrastive loss over N path pairs of equal length L.

    ``p`` and ``q`` are pooled panorama encodings of shape (N, L, d).  At
    every step t, anchor p[k, t] is scored against all q[j, t]; only anchors
    with ``mask[k, t]`` contribute, while every q[j, t] stays a candidate.
    Returns None (and logs) when no anchor is eligible.
    """
    N, L, _ = p.shape
    if N < 2:
        raise PairingError("visual_loss needs N >= 2 pairs")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (N, L):
        raise ValueError(f"mask shape {mask.shape} != {(N, L)}")
    if not mask.any():
        log.info("visual_loss: no eligible anchors in batch, skipping")
        return None
    pn = normalize(p, axis=-1).transpose(1, 0, 2)    # (L, N, d)
    qn = normalize(q, axis=-1).transpose(1, 2, 0)    # (L, d, N)
    logp = log_softmax(matmul(pn, qn) * (1.0 / tau), axis=-1)   # (L, N, N)
    diag = logp[:, np.arange(N), np.arange(N)]                   # (L, N)
    return -(diag * mask.T.astype(np.float64)).sum()


@dataclass
class PathPair:
    p: Path
    q: Path
    similarity: float
    query_instr: str = ""
    match_mask: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.p) != len(self.q):
            raise ValueError("paired paths must have equal length")
        if self.p.env_id == self.q.env_id:
            raise ValueError("paired paths must come from different environments")


def mine_path_pairs(instructions: Sequence[Instruction], embeddings: np.ndarray,
                    paths: dict[str, Path], chunk: int = 512) -> list[PathPair]:
    """For every instruction, pair its path with the path of its most similar instruction.

    Candidates must belong to a different path, in a different environment,
    of the same length.  Search is exact; ties go to the lowest path id (then
    instruction id), so the result does not depend on input order.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    if (norms == 0).any():
        raise ZeroDivisionError("zero-norm instruction embedding")
    emb = emb / norms
    # canonical order makes argmax tie-breaking order-independent
    order = sorted(range(len(instructions)), key=lambda i: (instructions[i].path_id, instructions[i].instr_id))
    ins = [instructions[i] for i in order]
    emb = emb[order]
    path_of = np.array([paths[i.path_id] for i in ins], dtype=object)
    plen = np.array([len(path_of[k]) for k in range(len(ins))])
    penv = np.array([path_of[k].env_id for k in range(len(ins))])
    pid = np.array([i.path_id for i in ins])
    pairs: list[PathPair] = []
    for length in np.unique(plen):
        idx = np.flatnonzero(plen == length)
        for start in range(0, len(idx), chunk):
            qi = idx[start:start + chunk]
            sims = emb[qi] @ emb[idx].T
            invalid = (pid[qi][:, None] == pid[idx][None, :]) | (penv[qi][:, None] == penv[idx][None, :])
            sims = np.where(invalid, -np.inf, sims)
            best = sims.argmax(axis=1)       # first maximum = lowest (path_id, instr_id)
            for row, k in enumerate(qi):
                if not np.isfinite(sims[row, best[row]]):
                    log.info("no equal-length candidate for %s", ins[k].instr_id)
                    continue
                j = idx[best[row]]
                pairs.append(PathPair(path_of[k], path_of[j], float(sims[row, best[row]]), ins[k].instr_id))
    pairs.sort(key=lambda pp: pp.query_instr)
    return pairs


class ObjectSampler:
    """Draws the object classes that may certify a positive view pair."""

    def __init__(self, mode: str = "sampled-10", k: int = 10, seed: int = 0):
        if mode not in CONSTRAINT_MODES:
            raise ValueError(f"unknown object-constraint mode {mode!r}")
        self.mode = mode
        self.k = k
        self.rng = np.random.default_rng(seed)

    def sample(self) -> frozenset | None:
        """Class subset for this iteration; None means no constraint."""
        if self.mode == "off":
            return None
        if self.mode == "fixed-27":
            return frozenset(range(NUM_CLASSES))
        return frozenset(self.rng.choice(NUM_CLASSES, size=self.k, replace=False).tolist())


def object_filter(pair: PathPair, envs: dict[str, EnvGraph], classes: frozenset | None) -> np.ndarray:
    """mask[t] is True iff panoramas P[t] and Q[t] share an object class in ``classes``."""
    if classes is None:
        return np.ones(len(pair.p), dtype=bool)
    ep, eq = envs[pair.p.env_id], envs[pair.q.env_id]
    return np.array([
        bool(ep.panorama_objects(a) & eq.panorama_objects(b) & classes)
        for a, b in zip(pair.p.nodes, pair.q.nodes)
    ])


def similarity_filter(pairs: Sequence[PathPair], threshold: float) -> list[PathPair]:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    if threshold == 0.0:
        return list(pairs)
    # embeddings are unit-normalised, so cosine 1 may land a few ulps low
    return [pp for pp in pairs if pp.similarity >= threshold - 1e-12]

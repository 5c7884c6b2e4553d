"""Inspection helpers: nearest tokens, attention dumps, seen/unseen gaps."""
from __future__ import annotations

import numpy as np

from ..instrgen import VOCAB, VocabError
from ..metrics import METRICS, EvalReport


def nearest_tokens(embeddings, token: int, k: int) -> list[int]:
    """Cosine-nearest token ids to ``token``, excluding it; ties go to the lower id.

    ``embeddings`` is a (V, d) matrix or a language encoder, whose contextual
    word representations are used.
    """
    emb = embeddings.word_representations() if hasattr(embeddings, "word_representations") else embeddings
    emb = np.asarray(emb, dtype=np.float64)
    if not 0 <= int(token) < len(emb):
        raise VocabError(f"unknown token id {token}")
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return []
    norms = np.linalg.norm(emb, axis=1)
    if norms[token] == 0:
        raise ZeroDivisionError("query token has a zero embedding")
    sims = emb @ emb[token] / (np.where(norms == 0, 1.0, norms) * norms[token])
    sims[norms == 0] = -np.inf
    ids = np.arange(len(emb))
    order = np.lexsort((ids, -sims))
    return [int(i) for i in order if i != token][:k]


def nearest_words(embeddings, word: str, k: int) -> list[str]:
    inv = {v: t for t, v in VOCAB.items()}
    if word not in inv:
        raise VocabError(f"unknown word {word!r}")
    return [VOCAB[t] for t in nearest_tokens(embeddings, inv[word], k)]


def dump_attention(episode) -> dict:
    """Step-indexed text-attention weights recorded during a rollout."""
    return {
        "schema_version": 1,
        "instr_id": episode.instr_id,
        "path_id": episode.path.path_id,
        "tokens": [int(t) for t in episode.tokens],
        "steps": {str(t): [float(x) for x in rho] for t, rho in enumerate(episode.attention)},
    }


def attention_rows(dump: dict) -> np.ndarray | list:
    steps = dump["steps"]
    return [np.asarray(steps[str(t)]) for t in range(len(steps))]


def gap_report(seen: EvalReport, unseen: EvalReport) -> dict[str, float]:
    """Absolute seen/unseen difference per metric (aggregate level, 1 decimal)."""
    if seen.checkpoint and unseen.checkpoint and seen.checkpoint != unseen.checkpoint:
        raise ValueError(f"reports come from different checkpoints: {seen.checkpoint} vs {unseen.checkpoint}")
    return {m: round(abs(seen.aggregate[m] - unseen.aggregate[m]), 1) for m in METRICS}

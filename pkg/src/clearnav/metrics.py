"""Navigation metrics: SR, SPL, nDTW, sDTW and report aggregation."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .worldgen import EnvGraph, geodesic

SUCCESS_DISTANCE = 3.0   # metres; success is strictly closer than this
METRICS = ("SR", "SPL", "NDTW", "SDTW")


class MetricError(ValueError):
    pass


def dtw(pred: Sequence[int], ref: Sequence[int], dist: Callable[[int, int], float]) -> float:
    """Classic DTW cost with steps (advance both | advance pred | advance ref)."""
    if len(pred) == 0 or len(ref) == 0:
        raise MetricError("dtw needs non-empty sequences")
    n, m = len(pred), len(ref)
    cost = np.full((n + 1, m + 1), np.inf)
    cost[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best = min(cost[i - 1, j - 1], cost[i - 1, j], cost[i, j - 1])
            cost[i, j] = dist(pred[i - 1], ref[j - 1]) + best
    return float(cost[n, m])


def _env_dist(env: EnvGraph):
    geo = env.geodesic_matrix()
    return lambda a, b: float(geo[a, b])


def ndtw(pred, ref, env: EnvGraph, threshold: float = SUCCESS_DISTANCE) -> float:
    return float(np.exp(-dtw(pred, ref, _env_dist(env)) / (len(ref) * threshold)))


def success(pred, ref, env: EnvGraph, threshold: float = SUCCESS_DISTANCE) -> int:
    return int(geodesic(env, pred[-1], ref[-1]) < threshold)


def spl(succeeded: float, shortest_len: float, taken_len: float) -> float:
    if shortest_len <= 0:
        raise MetricError("shortest path length must be positive")
    if taken_len < 0:
        raise MetricError("taken length must be non-negative")
    return float(succeeded) * shortest_len / max(shortest_len, taken_len)


def sdtw(pred, ref, env: EnvGraph, threshold: float = SUCCESS_DISTANCE) -> float:
    return success(pred, ref, env, threshold) * ndtw(pred, ref, env, threshold)


def path_length(nodes: Sequence[int], env: EnvGraph) -> float:
    return float(sum(env.edge_length(a, b) for a, b in zip(nodes[:-1], nodes[1:])))


@dataclass
class EpisodeResult:
    env_id: str
    path_id: str
    language: str
    split: str
    nodes: list[int]
    SR: float
    SPL: float
    NDTW: float
    SDTW: float


def score_episode(env: EnvGraph, ref: Sequence[int], pred: Sequence[int], *, path_id: str,
                  language: str, split: str) -> EpisodeResult:
    if env.env_id is None:
        raise MetricError("environment without id")
    sr = success(pred, ref, env)
    nd = ndtw(pred, ref, env)
    shortest = geodesic(env, ref[0], ref[-1])
    return EpisodeResult(env.env_id, path_id, language, split, list(map(int, pred)), sr,
                         spl(sr, shortest, path_length(pred, env)) if shortest > 0 else float(sr),
                         nd, sr * nd)


def _means(rows: Sequence[EpisodeResult]) -> dict[str, float]:
    return {k: round(100.0 * float(np.mean([getattr(r, k) for r in rows])), 1) for k in METRICS}


def weighted_std(values: Sequence[float], weights: Sequence[float]) -> float:
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    mu = (w * v).sum() / w.sum()
    return float(np.sqrt((w * (v - mu) ** 2).sum() / w.sum()))


@dataclass
class EvalReport:
    aggregate: dict[str, float]
    per_language: dict[str, dict[str, float]]
    per_environment: dict[str, dict[str, float]]
    per_split: dict[str, dict[str, float]]
    episode_counts: dict[str, int]
    env_weighted_std: dict[str, float] = field(default_factory=dict)
    checkpoint: str = ""            # identifies the weights that produced the episodes

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def aggregate(episodes: Iterable[EpisodeResult], checkpoint: str = "") -> EvalReport:
    eps = list(episodes)
    if not eps:
        raise MetricError("cannot aggregate zero episodes")
    groups = {"language": defaultdict(list), "env": defaultdict(list), "split": defaultdict(list)}
    for e in eps:
        groups["language"][e.language].append(e)
        groups["env"][e.env_id].append(e)
        groups["split"][e.split].append(e)
    per_env = {k: _means(v) for k, v in sorted(groups["env"].items())}
    env_counts = [len(groups["env"][k]) for k in per_env]
    env_std = {
        m: round(weighted_std([per_env[k][m] for k in per_env], env_counts), 2) for m in METRICS
    }
    return EvalReport(
        aggregate=_means(eps),
        per_language={k: _means(v) for k, v in sorted(groups["language"].items())},
        per_environment=per_env,
        per_split={k: _means(v) for k, v in sorted(groups["split"].items())},
        episode_counts={k: len(v) for k, v in sorted(groups["language"].items())},
        env_weighted_std=env_std,
        checkpoint=checkpoint,
    )

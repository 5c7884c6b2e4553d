"""Corpus construction and the on-disk artifact formats (all versioned)."""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath
from typing import Iterable

import numpy as np

from ..agent import NavItem
from ..instrgen import VOCAB, Instruction, generate_instructions
from ..worldgen import (
    NUM_CLASSES,
    NUM_VIEWS,
    EnvGraph,
    FrameStep,
    Path,
    WorldGenError,
    WorldSpec,
    generate_environment,
    sample_path,
    stable_hash,
)
from .config import ExperimentConfig

SCHEMA_VERSION = 1


class DataError(ValueError):
    pass


def stream_seed(seed: int, name: str) -> int:
    """Independent seed for a named randomness stream of a stage."""
    return stable_hash(int(seed), name)


@dataclass
class Corpus:
    envs: dict[str, EnvGraph]
    paths: dict[str, Path]
    instructions: list[Instruction]
    path_split: dict[str, str]          # path_id -> train | val-seen | val-unseen
    _by_path: dict = field(default=None, repr=False)

    def by_path(self) -> dict[str, list[Instruction]]:
        if self._by_path is None:
            out: dict[str, list[Instruction]] = {}
            for ins in self.instructions:
                out.setdefault(ins.path_id, []).append(ins)
            self._by_path = out
        return self._by_path

    def path_ids(self, split: str) -> list[str]:
        return sorted(p for p, s in self.path_split.items() if s == split)

    def split_instructions(self, split: str) -> list[Instruction]:
        keep = set(self.path_ids(split))
        return [i for i in self.instructions if i.path_id in keep]

    def items(self, split: str) -> list[NavItem]:
        tag = "train-seen" if split == "train" else split
        return [NavItem(self.paths[i.path_id], i, tag) for i in self.split_instructions(split)]


def build_corpus(cfg: ExperimentConfig) -> Corpus:
    """Environments, paths and instructions for a config, deterministic in ``cfg.seed``."""
    c = cfg.corpus
    wseed = stream_seed(cfg.seed, "worldgen")
    pseed = stream_seed(cfg.seed, "paths")
    iseed = stream_seed(cfg.seed, "instrgen")
    envs: dict[str, EnvGraph] = {}
    for k in range(c.train_envs + c.val_unseen_envs):
        split = "train-seen" if k < c.train_envs else "val-unseen"
        env = generate_environment(wseed, cfg.world, env_id=f"env{k:03d}", split=split)
        envs[env.env_id] = env
    paths: dict[str, Path] = {}
    path_split: dict[str, str] = {}
    span = c.max_path_len - c.min_path_len + 1

    def draw(env: EnvGraph, tag: str, count: int, split: str, taken: set) -> None:
        made, attempt = 0, 0
        while made < count:
            if attempt > 50 * count:
                raise WorldGenError(f"could not draw {count} distinct paths in {env.env_id}")
            length = c.min_path_len + (made % span)
            pid = f"{env.env_id}_{tag}{made:03d}"
            p = sample_path(env, length, stable_hash(pseed, pid, attempt), path_id=pid)
            attempt += 1
            if tuple(p.nodes) in taken:
                continue
            taken.add(tuple(p.nodes))
            paths[pid] = p
            path_split[pid] = split
            made += 1

    for k, env in enumerate(envs.values()):
        taken: set = set()
        if env.split == "train-seen":
            draw(env, "p", c.paths_per_env, "train", taken)
            if k < c.val_seen_envs:
                draw(env, "v", c.val_paths_per_env, "val-seen", taken)
        else:
            draw(env, "v", c.val_paths_per_env, "val-unseen", taken)
    instructions = [ins for pid in sorted(paths) for ins in generate_instructions(paths[pid], iseed)]
    return Corpus(envs, paths, instructions, path_split)


# -- JSONL helpers ----------------------------------------------------------
def _header(kind: str, **extra) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": kind, **extra}


def write_jsonl(path, kind: str, rows: Iterable[dict], **extra) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(_header(kind, **extra)) + "\n")
        for r in rows:
            fh.write(json.dumps(r) + "\n")


def read_jsonl(path, kind: str) -> tuple[dict, list[dict]]:
    p = FsPath(path)
    if not p.exists():
        raise DataError(f"missing input file: {p}")
    with open(p) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{p} is empty")
    try:
        header = json.loads(lines[0])
        rows = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise DataError(f"{p}: malformed JSON line ({exc})") from exc
    check_header(header, kind, p)
    return header, rows


def check_header(header: dict, kind: str, where) -> None:
    if not isinstance(header, dict) or "schema_version" not in header:
        raise DataError(f"{where}: missing schema_version")
    if header["schema_version"] != SCHEMA_VERSION:
        raise DataError(f"{where}: unsupported schema_version {header['schema_version']}")
    if header.get("kind") != kind:
        raise DataError(f"{where}: expected kind {kind!r}, found {header.get('kind')!r}")


def write_json(path, kind: str, payload: dict) -> None:
    FsPath(path).write_text(json.dumps({**_header(kind), **payload}, indent=2) + "\n")


def read_json(path, kind: str) -> dict:
    p = FsPath(path)
    if not p.exists():
        raise DataError(f"missing input file: {p}")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{p}: malformed JSON ({exc})") from exc
    check_header(d, kind, p)
    return d


# -- environments -------------------------------------------------------------
def env_to_dict(env: EnvGraph) -> dict:
    v, m, c = np.nonzero(env.inventories)
    return {
        "env_id": env.env_id,
        "split": env.split,
        "positions": env.positions.tolist(),
        "edges": [list(e) for e in env.edges],
        "objects": np.stack([v, m, c], axis=1).tolist(),
        "signature": env.signature.tolist(),
        "noise_seed": env.noise_seed,
    }


def env_from_dict(d: dict, spec: WorldSpec) -> EnvGraph:
    pos = np.asarray(d["positions"], dtype=np.float64)
    inv = np.zeros((len(pos), NUM_VIEWS, NUM_CLASSES), dtype=bool)
    for v, m, c in d["objects"]:
        inv[v, m, c] = True
    return EnvGraph(d["env_id"], d["split"], pos, [tuple(e) for e in d["edges"]], inv,
                    np.asarray(d["signature"], dtype=np.float64), spec, int(d["noise_seed"]))


def save_envs(path, envs: dict[str, EnvGraph], spec: WorldSpec) -> None:
    write_jsonl(path, "envs", (env_to_dict(e) for e in envs.values()), spec=asdict(spec))


def load_envs(path) -> dict[str, EnvGraph]:
    header, rows = read_jsonl(path, "envs")
    spec = WorldSpec(**header["spec"])
    return {r["env_id"]: env_from_dict(r, spec) for r in rows}


# -- paths and instructions ---------------------------------------------------
def path_to_dict(p: Path, split: str) -> dict:
    return {"path_id": p.path_id, "env_id": p.env_id, "nodes": list(p.nodes),
            "start_heading": p.start_heading, "frame": [[s.action, s.landmark] for s in p.frame],
            "split": split}


def path_from_dict(d: dict) -> Path:
    return Path(d["path_id"], d["env_id"], [int(n) for n in d["nodes"]], float(d["start_heading"]),
                tuple(FrameStep(a, lm) for a, lm in d["frame"]))


def save_paths(path, corpus: Corpus) -> None:
    write_jsonl(path, "paths", (path_to_dict(corpus.paths[p], corpus.path_split[p]) for p in sorted(corpus.paths)))


def load_paths(path) -> tuple[dict[str, Path], dict[str, str]]:
    _, rows = read_jsonl(path, "paths")
    return {r["path_id"]: path_from_dict(r) for r in rows}, {r["path_id"]: r["split"] for r in rows}


def save_instructions(path, instructions: Iterable[Instruction]) -> None:
    write_jsonl(path, "instructions", (asdict(i) | {"tokens": list(i.tokens)} for i in instructions))


def load_instructions(path) -> list[Instruction]:
    _, rows = read_jsonl(path, "instructions")
    return [Instruction(r["instr_id"], r["path_id"], r["language"], int(r["annotator"]), tuple(r["tokens"]))
            for r in rows]


def save_vocab(path) -> None:
    write_json(path, "vocab", {"vocab": {str(k): v for k, v in sorted(VOCAB.items())}})


def save_world(dirpath, corpus: Corpus, spec: WorldSpec) -> None:
    d = FsPath(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    save_envs(d / "envs.jsonl", corpus.envs, spec)
    save_paths(d / "paths.jsonl", corpus)
    write_json(d / "manifest.json", "manifest", manifest(corpus))


def manifest(corpus: Corpus) -> dict:
    """File names plus environment and path counts per split."""
    env_splits = Counter(e.split for e in corpus.envs.values())
    path_splits = Counter(corpus.path_split.values())
    return {
        "files": {"environments": "envs.jsonl", "paths": "paths.jsonl", "instructions": "instructions.jsonl"},
        "environments": dict(sorted(env_splits.items())),
        "paths": dict(sorted(path_splits.items())),
    }


def load_corpus(dirpath) -> Corpus:
    d = FsPath(dirpath)
    envs = load_envs(d / "envs.jsonl")
    paths, split = load_paths(d / "paths.jsonl")
    if (d / "manifest.json").exists():
        want = read_json(d / "manifest.json", "manifest")["paths"]
        if want != dict(sorted(Counter(split.values()).items())):
            raise DataError(f"{d}: path counts disagree with manifest.json")
    instructions = load_instructions(d / "instructions.jsonl")
    missing = {p.env_id for p in paths.values()} - set(envs)
    if missing:
        raise DataError(f"paths reference unknown environments: {sorted(missing)[:3]}")
    unknown = {i.path_id for i in instructions} - set(paths)
    if unknown:
        raise DataError(f"instructions reference unknown paths: {sorted(unknown)[:3]}")
    return Corpus(envs, paths, instructions, split)


# -- mined pairs and trajectories ---------------------------------------------
def save_pairs(path, pairs) -> None:
    write_jsonl(path, "pairs", ({"p_path_id": pp.p.path_id, "q_path_id": pp.q.path_id,
                                 "similarity": pp.similarity, "query_instr": pp.query_instr} for pp in pairs))


def load_pairs(path, paths: dict[str, Path]):
    from ..contrastive import PathPair

    _, rows = read_jsonl(path, "pairs")
    try:
        return [PathPair(paths[r["p_path_id"]], paths[r["q_path_id"]], float(r["similarity"]),
                         r.get("query_instr", "")) for r in rows]
    except KeyError as exc:
        raise DataError(f"pair references unknown path {exc.args[0]}") from exc


def trajectory_rows(episodes) -> list[dict]:
    return [{"env_id": e.env.env_id, "path_id": e.path.path_id, "instr_id": e.instr_id,
             "language": e.language, "split": e.split, "nodes": [int(n) for n in e.trajectory],
             "stopped": bool(e.stopped)} for e in episodes]


def save_trajectories(path, rows: list[dict]) -> None:
    write_jsonl(path, "trajectories", rows)


def load_trajectories(path) -> list[dict]:
    return read_jsonl(path, "trajectories")[1]


def write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# schema_version={SCHEMA_VERSION}":
            raise DataError(f"{path}: missing or unsupported schema_version line")
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]

"""Experiment configuration: nested dataclasses loaded from / saved to JSON."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path as FsPath

from ..agent import NavConfig
from ..contrastive import CONSTRAINT_MODES, STRATEGIES
from ..worldgen import WorldSpec

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class CorpusConfig:
    train_envs: int = 24
    val_seen_envs: int = 4          # training environments that also hold val-seen paths
    val_unseen_envs: int = 4
    paths_per_env: int = 40
    val_paths_per_env: int = 10
    min_path_len: int = 4
    max_path_len: int = 7


@dataclass
class LangPretrainConfig:
    enabled: bool = True
    iterations: int = 600
    batch_pairs: int = 16
    lr: float = 2e-3
    tau: float = 0.1
    strategy: str = "multi"
    symmetric_loss: bool = False
    dim: int = 64
    layers: int = 2


@dataclass
class VisPretrainConfig:
    enabled: bool = True
    iterations: int = 300
    batch_pairs: int = 16
    lr: float = 1e-3
    tau: float = 0.1
    constraint: str = "sampled-10"
    sample_size: int = 10
    similarity_threshold: float = 0.0


@dataclass
class ExperimentConfig:
    seed: int = 0
    world: WorldSpec = field(default_factory=WorldSpec)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    lang: LangPretrainConfig = field(default_factory=LangPretrainConfig)
    vis: VisPretrainConfig = field(default_factory=VisPretrainConfig)
    nav: NavConfig = field(default_factory=NavConfig)
    eval_batch: int = 32

    def validate(self) -> "ExperimentConfig":
        c = self.corpus
        for name in ("train_envs", "paths_per_env", "val_paths_per_env"):
            if getattr(c, name) < 1:
                raise ConfigError(f"corpus.{name}", "must be >= 1")
        if c.val_unseen_envs < 0:
            raise ConfigError("corpus.val_unseen_envs", "must be >= 0")
        if not 0 <= c.val_seen_envs <= c.train_envs:
            raise ConfigError("corpus.val_seen_envs", "must lie in [0, train_envs]")
        if not 2 <= c.min_path_len <= c.max_path_len:
            raise ConfigError("corpus.min_path_len", "need 2 <= min_path_len <= max_path_len")
        if c.max_path_len > self.world.num_nodes:
            raise ConfigError("corpus.max_path_len", "longer than the number of viewpoints")
        if self.lang.strategy not in STRATEGIES:
            raise ConfigError("lang.strategy", f"must be one of {STRATEGIES}")
        if self.vis.constraint not in CONSTRAINT_MODES:
            raise ConfigError("vis.constraint", f"must be one of {CONSTRAINT_MODES}")
        for sect in ("lang", "vis"):
            s = getattr(self, sect)
            if s.tau <= 0:
                raise ConfigError(f"{sect}.tau", "must be positive")
            if s.batch_pairs < 2:
                raise ConfigError(f"{sect}.batch_pairs", "must be >= 2")
            if s.iterations < 0:
                raise ConfigError(f"{sect}.iterations", "must be >= 0")
        if not 0.0 <= self.vis.similarity_threshold <= 1.0:
            raise ConfigError("vis.similarity_threshold", "must lie in [0, 1]")
        if not 1 <= self.vis.sample_size <= 27:
            raise ConfigError("vis.sample_size", "must lie in [1, 27]")
        if self.lang.dim != self.nav.text_dim or self.lang.layers != self.nav.lang_layers:
            raise ConfigError("nav.text_dim", "must match lang.dim and lang.layers")
        try:
            self.world.validate()
        except ValueError as exc:
            raise ConfigError("world", str(exc)) from exc
        try:
            self.nav.validate()
        except ValueError as exc:
            raise ConfigError("nav", str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"unsupported version {version}")
        return _build(cls, d, "").validate()


def _build(cls, d: dict, prefix: str):
    if not isinstance(d, dict):
        raise ConfigError(prefix.rstrip(".") or "config", "expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ConfigError(prefix + unknown[0], "unknown field")
    kwargs = {}
    defaults = cls()
    for name, value in d.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{prefix}{name}.")
            continue
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(prefix + name, "expected a boolean")
        elif isinstance(current, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(prefix + name, "expected an integer")
        elif isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(prefix + name, "expected a number")
            value = float(value)
        elif isinstance(current, str) and not isinstance(value, str):
            raise ConfigError(prefix + name, "expected a string")
        kwargs[name] = value
    return cls(**kwargs)


def load_config(path) -> ExperimentConfig:
    p = FsPath(path)
    if not p.exists():
        raise ConfigError("config", f"file not found: {p}")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(d)


def save_config(cfg: ExperimentConfig, path) -> None:
    FsPath(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=False) + "\n")


def tiny_config(seed: int = 0) -> ExperimentConfig:
    """The bundled small configuration used by the quick pipeline and CI."""
    return ExperimentConfig(
        seed=seed,
        corpus=CorpusConfig(train_envs=6, val_seen_envs=2, val_unseen_envs=2, paths_per_env=12,
                            val_paths_per_env=4),
        lang=LangPretrainConfig(iterations=120),
        vis=VisPretrainConfig(iterations=60),
        nav=NavConfig(iterations=80),
    ).validate()

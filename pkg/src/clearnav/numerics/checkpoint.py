"""JSON checkpoint format: {"schema_version", "kind", "params": {name: {"shape", "data"}}}.

Floats are written with ``repr`` precision so a save/load round trip is bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn import ParamStore

SCHEMA_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_params(store: ParamStore | dict, path, kind: str = "params", meta: dict | None = None) -> None:
    state = store.state_dict() if isinstance(store, ParamStore) else store
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "meta": meta or {},
        "params": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in np.asarray(arr).reshape(-1)]}
            for name, arr in state.items()
        },
    }
    Path(path).write_text(json.dumps(payload))


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(f"{path}: unsupported schema_version {payload.get('schema_version')!r}")
    state = {}
    for name, rec in payload["params"].items():
        arr = np.array(rec["data"], dtype=np.float64)
        if arr.size != int(np.prod(rec["shape"])):
            raise CheckpointError(f"{path}: {name} has {arr.size} values for shape {rec['shape']}")
        state[name] = arr.reshape(rec["shape"])
    return state, {**payload.get("meta", {}), "kind": payload.get("kind")}

"""Structured-text checkpoints: named arrays plus a config fingerprint.

JSON keeps the format portable and diff-able; float round-tripping is
exact because Python serializes doubles via repr.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .policy import Layer, PolicyParams

__all__ = ["Checkpoint", "CheckpointError", "save_checkpoint", "load_checkpoint"]


class CheckpointError(ValueError):
    """The checkpoint file is missing fields or malformed."""


@dataclass
class Checkpoint:
    params: PolicyParams
    fingerprint: str
    meta: dict


def save_checkpoint(path: str | Path, params: PolicyParams, fingerprint: str, meta: dict | None = None) -> None:
    arrays = {}
    for name, arr in params.named_arrays():
        arrays[name] = {"shape": list(arr.shape), "data": arr.ravel().tolist()}
    doc = {"format": "freeflyer-dock-checkpoint-v1", "fingerprint": fingerprint, "meta": meta or {}, "arrays": arrays}
    Path(path).write_text(json.dumps(doc))


def _rebuild(arrays: dict, name: str) -> np.ndarray:
    if name not in arrays:
        raise CheckpointError(f"checkpoint is missing array {name!r}")
    entry = arrays[name]
    arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
    if not np.all(np.isfinite(arr)):
        raise CheckpointError(f"checkpoint array {name!r} contains non-finite values")
    return arr


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot parse checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or "arrays" not in doc:
        raise CheckpointError(f"checkpoint {path} has no 'arrays' section")
    arrays = doc["arrays"]
    names = sorted(arrays)
    try:
        n_actor = sum(1 for n in names if n.startswith("actor.") and n.endswith(".W"))
        n_critic = sum(1 for n in names if n.startswith("critic.") and n.endswith(".W"))
        actor = [Layer(W=_rebuild(arrays, f"actor.{i}.W"), b=_rebuild(arrays, f"actor.{i}.b")) for i in range(n_actor)]
        critic = [Layer(W=_rebuild(arrays, f"critic.{i}.W"), b=_rebuild(arrays, f"critic.{i}.b")) for i in range(n_critic)]
        params = PolicyParams(actor=actor, critic=critic, log_std=_rebuild(arrays, "log_std"))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint {path} arrays are malformed: {exc}") from exc
    if not actor or not critic:
        raise CheckpointError(f"checkpoint {path} does not contain both networks")
    return Checkpoint(params=params, fingerprint=str(doc.get("fingerprint", "")), meta=doc.get("meta", {}))

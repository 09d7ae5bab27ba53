"""JSON checkpoint container for trained networks.

Layout (``format_version`` 1)::

    {
      "format": "svpcnet-checkpoint",
      "format_version": 1,
      "architecture": {...},          # Architecture fields
      "tensors": {name: {"shape": [...], "data": [...]}},  # row-major float64
      "config": {...},                # TrainConfig fields
      "seed": int,
      "history": {...},               # TrainHistory fields
      "meta": {...}                   # free-form (model id, alpha clamp, ...)
    }

Floats are written with ``repr`` precision, so a load reproduces every bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .networks import Architecture, NetworkParams
from .train import TrainConfig, TrainHistory

FORMAT = "svpcnet-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: NetworkParams, *, config: TrainConfig | None = None, seed=None,
                    history: TrainHistory | None = None, meta: dict | None = None) -> Path:
    path = Path(path)
    doc = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "architecture": params.arch.to_dict(),
        "tensors": {
            k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in sorted(params.tensors.items())
        },
        "config": config.to_dict() if config else None,
        "seed": seed,
        "history": history.to_dict() if history else None,
        "meta": meta or {},
    }
    path.write_text(json.dumps(doc) + "\n")
    return path


def load_checkpoint(path) -> dict:
    """Returns a dict with ``params`` plus ``config``, ``seed``, ``history`` and ``meta``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {doc.get('format_version')}")
    arch = Architecture.from_dict(doc["architecture"])
    tensors = {k: np.array(t["data"], dtype=float).reshape(t["shape"]) for k, t in doc["tensors"].items()}
    return {
        "params": NetworkParams(arch, tensors),
        "config": TrainConfig(**doc["config"]) if doc.get("config") else None,
        "seed": doc.get("seed"),
        "history": TrainHistory.from_dict(doc["history"]) if doc.get("history") else None,
        "meta": doc.get("meta", {}),
    }

"""Versioned JSON checkpoints for :class:`~pulsecorr.lstm.ModelParams`."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .lstm import ModelParams, param_names

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: Path | str,
    params: ModelParams,
    train_config: dict,
    system: dict,
    manifest_sha256: str,
) -> None:
    tensors = {
        name: {"shape": list(a.shape), "values": [float(v) for v in a.reshape(-1)]}
        for name, a in zip(params.names(), params.arrays())
    }
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "hidden_dim": params.hidden_dim,
        "n_layers": len(params.layers),
        "train_config": train_config,
        "system": system,
        "dataset_manifest_sha256": manifest_sha256,
        "tensors": tensors,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path: Path | str) -> tuple[ModelParams, dict]:
    """Returns the parameters and the checkpoint metadata (everything but tensors)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')}")
    tensors = doc.pop("tensors")
    hidden, n_layers = doc["hidden_dim"], doc["n_layers"]
    arrays = []
    for name in param_names(n_layers):
        t = tensors[name]
        arrays.append(np.asarray(t["values"], dtype=float).reshape(t["shape"]))
    return ModelParams.from_arrays(hidden, arrays, n_layers), doc


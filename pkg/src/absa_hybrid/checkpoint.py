"""Model checkpointing: one JSON document with config, embedding metadata,
and every parameter tensor under its canonical name.

JSON float repr round-trips IEEE doubles exactly, so save/load is bit-exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import LcrRotModel, ModelConfig, build_params
from .numerics import Parameter

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    embedding: dict
    values: dict[str, np.ndarray]


def save_checkpoint(path, model: LcrRotModel, embedding: dict,
                    extra_params: list[Parameter] = ()) -> None:
    params = list(model.params) + list(extra_params)
    obj = {
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "embedding": embedding,
        "params": {p.name: {"shape": list(p.value.shape),
                            "values": p.value.flatten().tolist()}
                   for p in params},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid checkpoint JSON: {exc}") from exc
    if obj.get("version") != FORMAT_VERSION:
        raise ValidationError(
            f"{path}: unsupported checkpoint version {obj.get('version')!r}")
    try:
        config = ModelConfig.from_dict(obj["config"])
        values = {name: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
                  for name, entry in obj["params"].items()}
        embedding = obj.get("embedding", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed checkpoint: {exc}") from exc
    return Checkpoint(config, embedding, values)


def restore_model(ckpt: Checkpoint) -> tuple[LcrRotModel, dict[str, np.ndarray]]:
    """Rebuild a model from a checkpoint.

    Returns the model and any leftover named tensors (embedder-owned
    parameters such as a trainable layer mixture).
    """
    params = build_params(ckpt.config)
    leftovers = dict(ckpt.values)
    for p in params:
        if p.name not in leftovers:
            raise ValidationError(f"checkpoint is missing parameter {p.name!r}")
        stored = leftovers.pop(p.name)
        if stored.shape != p.value.shape:
            raise ValidationError(
                f"checkpoint parameter {p.name!r} has shape {stored.shape}, "
                f"model expects {p.value.shape}")
        p.value[...] = stored
    return LcrRotModel(ckpt.config, params), leftovers

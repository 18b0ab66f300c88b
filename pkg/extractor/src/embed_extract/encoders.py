"""Encoders behind the extraction tool.

Two kinds of local model directory are understood:

* **BERT-style**: a ``transformers`` model directory (detected by its
  ``config.json`` carrying ``model_type``).  Subword tokenization applies;
  the encoder block outputs (layer 1 -> L, embedding output excluded) are
  emitted.
* **ELMo-style**: a directory whose ``config.json`` has
  ``{"kind": "elmo-style", "name", "seed", "dim", "layers"}``.  Weights are
  derived deterministically from the seed; tokens embed whole-word (one
  subtoken each) via a hash embedding followed by stacked bi-LSTM layers.
  L+1 layers are emitted, the token-embedding layer first.

Both encoders return ``(layers, word_ids)`` where ``layers`` has shape
``[emitted_layers, n_subtokens, dim]`` and ``word_ids[i]`` is the word index
of subtoken ``i`` (``None`` for special tokens).
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


class ModelError(Exception):
    pass


def load_encoder(model_dir):
    config_path = Path(model_dir) / "config.json"
    if not config_path.exists():
        raise ModelError(f"{model_dir}: no config.json; not a model directory")
    with open(config_path, encoding="utf-8") as fh:
        config = json.load(fh)
    if config.get("kind") == "elmo-style":
        return ElmoStyleEncoder(model_dir, config)
    if "model_type" in config:
        return BertStyleEncoder(model_dir)
    raise ModelError(f"{model_dir}: unrecognized model config")


def _token_seed(global_seed: int, token: str) -> list[int]:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return [global_seed, int.from_bytes(digest[:8], "little")]


class ElmoStyleEncoder:
    """Deterministic seeded bi-LSTM stack over hash token embeddings."""

    def __init__(self, model_dir, config: dict):
        for key in ("name", "seed", "dim", "layers"):
            if key not in config:
                raise ModelError(f"{model_dir}: elmo-style config misses {key!r}")
        self.identifier = f"elmo-style:{config['name']}"
        self.seed = int(config["seed"])
        self.dim = int(config["dim"])
        self.lstm_layers = int(config["layers"])
        if self.dim < 2 or self.dim % 2 != 0:
            raise ModelError("elmo-style dim must be even and >= 2")
        if self.lstm_layers < 1:
            raise ModelError("elmo-style needs at least one layer")
        self.layer_count = self.lstm_layers + 1    # embeddings come first
        d = self.dim // 2
        rng = np.random.default_rng(self.seed)
        self._weights = []
        for _ in range(self.lstm_layers):
            per_direction = []
            for _ in range(2):
                gates = {g: (rng.uniform(-0.4, 0.4, (d, self.dim)),
                             rng.uniform(-0.4, 0.4, (d, d)),
                             rng.uniform(-0.4, 0.4, d))
                         for g in ("i", "f", "o", "c")}
                per_direction.append(gates)
            self._weights.append(per_direction)

    def _embed(self, token: str) -> np.ndarray:
        rng = np.random.default_rng(_token_seed(self.seed, token))
        return rng.uniform(-1.0, 1.0, self.dim)

    @staticmethod
    def _lstm(xs: list[np.ndarray], gates) -> list[np.ndarray]:
        d = gates["i"][2].shape[0]
        h = np.zeros(d)
        c = np.zeros(d)
        out = []
        for x in xs:
            pre = {g: wx @ x + wh @ h + b for g, (wx, wh, b) in gates.items()}
            sig = lambda z: 1.0 / (1.0 + np.exp(-z))
            c = sig(pre["f"]) * c + sig(pre["i"]) * np.tanh(pre["c"])
            h = sig(pre["o"]) * np.tanh(c)
            out.append(h)
        return out

    def encode(self, tokens: list[str]):
        current = [self._embed(t) for t in tokens]
        layers = [np.stack(current)]
        for fwd_gates, bwd_gates in self._weights:
            fwd = self._lstm(current, fwd_gates)
            bwd = self._lstm(current[::-1], bwd_gates)[::-1]
            current = [np.concatenate([a, b]) for a, b in zip(fwd, bwd)]
            layers.append(np.stack(current))
        return np.stack(layers), list(range(len(tokens)))

    def static_vector(self, token: str) -> np.ndarray:
        return self._embed(token)


class BertStyleEncoder:
    """Wrapper over a local ``transformers`` encoder with subword merging
    left to the caller (word alignment comes from the fast tokenizer)."""

    def __init__(self, model_dir):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ModelError(
                "BERT-style extraction needs torch and transformers installed"
            ) from exc
        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_dir)
        if not getattr(self.tokenizer, "is_fast", False):
            raise ModelError(f"{model_dir}: need a fast tokenizer for word alignment")
        self.model = AutoModel.from_pretrained(model_dir)
        self.model.eval()
        self.layer_count = int(self.model.config.num_hidden_layers)
        self.dim = int(self.model.config.hidden_size)
        self.identifier = f"bert-style:{Path(model_dir).name}"

    def encode(self, tokens: list[str]):
        enc = self.tokenizer(tokens, is_split_into_words=True,
                             return_tensors="pt")
        with self._torch.no_grad():
            out = self.model(**enc, output_hidden_states=True)
        # hidden_states[0] is the embedding output; blocks are 1..L
        layers = np.stack([h[0].numpy().astype(np.float64)
                           for h in out.hidden_states[1:]])
        return layers, enc.word_ids()

    def static_vector(self, token: str) -> np.ndarray:
        ids = self.tokenizer(token, add_special_tokens=False)["input_ids"]
        if not ids:
            raise ModelError(f"token {token!r} produced no subtokens")
        table = self.model.get_input_embeddings().weight
        with self._torch.no_grad():
            rows = table[self._torch.tensor(ids)].numpy().astype(np.float64)
        return rows.mean(axis=0)

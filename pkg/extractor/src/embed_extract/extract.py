"""The extraction driver: corpus -> per-token per-layer vectors on disk."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import read_sentences
from .encoders import load_encoder

MERGE_POLICIES = ("mean", "first", "sum")


class AlignmentError(Exception):
    """A corpus token could not be matched to any subtoken."""


@dataclass
class ExtractionJob:
    corpus_path: str
    model_dir: str
    output_path: str
    merge: str = "mean"
    layers: list[int] | None = None      # 1-based selection; None = all
    static_output_path: str | None = None

    def __post_init__(self):
        if self.merge not in MERGE_POLICIES:
            raise ValueError(f"merge policy must be one of {MERGE_POLICIES}, "
                             f"got {self.merge!r}")


def _merge(rows: np.ndarray, policy: str) -> np.ndarray:
    if policy == "first":
        return rows[0]
    if policy == "sum":
        return rows.sum(axis=0)
    return rows.mean(axis=0)


def _word_groups(word_ids, n_words: int, sid: str, tokens: list[str]):
    """Subtoken index lists per word, verifying full coverage."""
    groups: list[list[int]] = [[] for _ in range(n_words)]
    for position, word in enumerate(word_ids):
        if word is None:
            continue
        if not 0 <= word < n_words:
            raise AlignmentError(
                f"sid {sid!r}: tokenizer produced word index {word} for "
                f"{n_words} tokens")
        groups[word].append(position)
    for word, positions in enumerate(groups):
        if not positions:
            raise AlignmentError(
                f"sid {sid!r}: token {word} ({tokens[word]!r}) has no subtokens")
    return groups


def extract(job: ExtractionJob) -> dict:
    """Run the model over the corpus and write the store atomically.

    Returns the header that was written.
    """
    sentences = read_sentences(job.corpus_path)
    encoder = load_encoder(job.model_dir)

    selected = job.layers
    if selected is not None:
        bad = [i for i in selected if not 1 <= i <= encoder.layer_count]
        if bad:
            raise ValueError(
                f"layer selection {bad} out of range 1..{encoder.layer_count}")
        keep = [i - 1 for i in selected]
    else:
        keep = list(range(encoder.layer_count))

    header = {"model": encoder.identifier, "layers": len(keep),
              "dim": encoder.dim, "merge": job.merge}
    records = []
    for sid, tokens in sentences:
        layers, word_ids = encoder.encode(tokens)
        groups = _word_groups(word_ids, len(tokens), sid, tokens)
        for word, positions in enumerate(groups):
            merged = [_merge(layers[layer][positions], job.merge)
                      for layer in keep]
            records.append({"sid": sid, "tok": word,
                            "layers": [[float(v) for v in vec] for vec in merged]})

    _write_atomic(job.output_path, header, records)
    if job.static_output_path:
        _write_static(job.static_output_path, sentences, encoder)
    return header


def _write_atomic(path, header: dict, records: list[dict]) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_static(path, sentences, encoder) -> None:
    """Optional non-contextual dump: one vector per distinct corpus token."""
    seen: dict[str, None] = {}
    for _, tokens in sentences:
        for tok in tokens:
            seen.setdefault(tok, None)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for tok in seen:
                vec = encoder.static_vector(tok)
                fh.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

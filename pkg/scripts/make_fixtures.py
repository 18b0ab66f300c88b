#!/usr/bin/env python3
"""Regenerate the derived test fixtures (seeded, so outputs are stable).

Writes into tests/fixtures/:
  toy_train.jsonl        30-sentence keyword-separable training corpus
  toy_eval_negmaj.jsonl  10 sentences with a negative majority (6/3/1)
  toy_glove.txt          non-contextual store over the toy vocabulary (dim 8)
  ctx_corpus.jsonl       4-sentence corpus aligned with the contextual store
  contextual_small.jsonl 5 layers x dim 6 synthetic contextual vectors
"""
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from absa_hybrid.dataset import Corpus, Sentence
from absa_hybrid.embeddings import save_noncontextual
from absa_hybrid.toydata import toy_corpus, toy_embedder

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def write_corpus(corpus: Corpus, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in corpus:
            fh.write(json.dumps({"sid": s.sid, "tokens": list(s.tokens),
                                 "target": [s.target_start, s.target_end],
                                 "category": s.category,
                                 "polarity": s.polarity}) + "\n")


def negative_majority_eval() -> Corpus:
    pool = toy_corpus(120, seed=202, split="test")
    want = {"negative": 6, "positive": 3, "neutral": 1}
    picked = []
    for s in pool:
        if want.get(s.polarity, 0) > 0:
            want[s.polarity] -= 1
            picked.append(s)
    assert not any(want.values())
    return Corpus(picked, split="test")


CTX_SENTENCES = [
    ("c1", ["the", "soup", "was", "lovely"], (1, 2), "FOOD", "positive"),
    ("c2", ["service", "felt", "hurried", "tonight"], (0, 1), "SERVICE", "negative"),
    ("c3", ["a", "plain", "room", "overall"], (2, 3), "AMBIENCE", "neutral"),
    ("c4", ["the", "soup", "and", "the", "room"], (4, 5), "AMBIENCE", "positive"),
]


def contextual_fixture(layers: int = 5, dim: int = 6, seed: int = 404):
    rng = np.random.default_rng(seed)
    corpus = Corpus([Sentence(sid, tuple(toks), s, e, cat, pol)
                     for sid, toks, (s, e), cat, pol in CTX_SENTENCES],
                    split="test")
    records = []
    for sentence in corpus:
        for idx in range(len(sentence.tokens)):
            vecs = rng.uniform(-1.0, 1.0, (layers, dim)).round(6)
            records.append({"sid": sentence.sid, "tok": idx,
                            "layers": vecs.tolist()})
    return corpus, records


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    write_corpus(toy_corpus(30, seed=101, split="train"),
                 FIXTURES / "toy_train.jsonl")
    write_corpus(negative_majority_eval(), FIXTURES / "toy_eval_negmaj.jsonl")
    save_noncontextual(toy_embedder(dim=8, seed=17).store,
                       FIXTURES / "toy_glove.txt")
    corpus, records = contextual_fixture()
    write_corpus(corpus, FIXTURES / "ctx_corpus.jsonl")
    header = {"model": "synthetic-fixture", "layers": 5, "dim": 6}
    with open(FIXTURES / "contextual_small.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()

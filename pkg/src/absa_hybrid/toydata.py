"""Synthetic keyword-separable corpora for desk-scale experiments.

Every sentence contains exactly one polarity keyword; the gold label is the
keyword's class, so the task is linearly separable given distinct token
vectors and any competent encoder should saturate it.
"""
from __future__ import annotations

import numpy as np

from .dataset import Corpus, Sentence
from .embeddings import NonContextualEmbedder, NonContextualStore

POSITIVE_WORDS = ("good", "great", "tasty", "lovely")
NEGATIVE_WORDS = ("bad", "awful", "bland", "dreadful")
NEUTRAL_WORDS = ("okay", "average", "ordinary", "typical")
FILLERS = ("the", "a", "was", "really", "quite", "and", "it", "so", "very", "this")
TARGETS = (("pizza", "FOOD"), ("menu", "FOOD"), ("service", "SERVICE"),
           ("staff", "SERVICE"), ("decor", "AMBIENCE"))

_KEYWORDS = {"positive": POSITIVE_WORDS, "negative": NEGATIVE_WORDS,
             "neutral": NEUTRAL_WORDS}


def vocabulary() -> list[str]:
    vocab = list(POSITIVE_WORDS + NEGATIVE_WORDS + NEUTRAL_WORDS + FILLERS)
    vocab.extend(t for t, _ in TARGETS)
    return vocab


def toy_corpus(size: int, seed: int, split: str = "train") -> Corpus:
    """Sentences of the shape ``filler* [keyword?] target filler* [keyword?]``
    with the keyword on a random side of the target."""
    rng = np.random.default_rng(seed)
    labels = ("negative", "neutral", "positive")
    sentences = []
    for i in range(size):
        polarity = labels[int(rng.integers(0, 3))]
        keyword = str(rng.choice(_KEYWORDS[polarity]))
        target, category = TARGETS[int(rng.integers(0, len(TARGETS)))]
        lead = [str(w) for w in rng.choice(FILLERS, size=int(rng.integers(1, 4)))]
        tail = [str(w) for w in rng.choice(FILLERS, size=int(rng.integers(0, 3)))]
        if rng.random() < 0.5:
            tokens = lead + [keyword] + [target] + tail
            start = len(lead) + 1
        else:
            tokens = lead + [target] + tail + [keyword]
            start = len(lead)
        sentences.append(Sentence(f"{split}-{i}", tuple(tokens), start, start + 1,
                                  category, polarity))
    return Corpus(sentences, split=split, source=f"toy(seed={seed})")


def toy_embedder(dim: int = 8, seed: int = 17) -> NonContextualEmbedder:
    """Seeded random vectors over the toy vocabulary."""
    rng = np.random.default_rng(seed)
    vectors = {tok: rng.uniform(-1.0, 1.0, dim) for tok in vocabulary()}
    return NonContextualEmbedder(NonContextualStore(dim, vectors, "zero"))

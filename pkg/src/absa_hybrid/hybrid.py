"""Two-step classification: ontology rules first, neural or majority backup
for every inconclusive verdict."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import (Corpus, Sentence, index_to_label, label_to_index,
                      majority_label)
from .errors import ConfigError
from .model import LcrRotModel
from .ontology import Ontology, classify as ontology_classify


@dataclass
class PredictionRecord:
    sid: str
    target_span: tuple[int, int]
    stage: str                     # "ontology" | "backup"
    polarity: str
    hits: list[dict] | None = None            # ontology rule trace
    probabilities: list[float] | None = None  # backup class probabilities

    def to_dict(self) -> dict:
        out = {"sid": self.sid, "target_span": list(self.target_span),
               "stage": self.stage, "polarity": self.polarity}
        if self.hits is not None:
            out["hits"] = self.hits
        if self.probabilities is not None:
            out["probabilities"] = self.probabilities
        return out


class ModelBackup:
    """Neural backup: trained model argmax over the three classes."""

    def __init__(self, model: LcrRotModel, embedder):
        self.model = model
        self.embedder = embedder

    def predict(self, sentence: Sentence) -> tuple[str, list[float] | None]:
        pred, probs = self.model.predict(sentence, self.embedder)
        return index_to_label(pred), [float(p) for p in probs]


class MajorityBackup:
    """Degenerate backup: always the training split's most frequent label."""

    def __init__(self, train_corpus: Corpus):
        if train_corpus.split != "train":
            raise ConfigError(
                "majority label must come from the training split, "
                f"got split {train_corpus.split!r}")
        self.label = majority_label(train_corpus)

    def predict(self, sentence: Sentence) -> tuple[str, list[float] | None]:
        return self.label, None


class HybridClassifier:
    """Ontology verdict when conclusive, backup otherwise.

    ``backup_calls`` counts how often the backup was consulted.
    """

    def __init__(self, ontology: Ontology, backup):
        self.ontology = ontology
        self.backup = backup
        self.backup_calls = 0

    def classify(self, sentence: Sentence) -> PredictionRecord:
        verdict = ontology_classify(self.ontology, sentence)
        if verdict.conclusive:
            return PredictionRecord(
                sentence.sid, sentence.target_span, "ontology", verdict.outcome,
                hits=[{"rule": h.rule, "form": h.form, "polarity": h.polarity}
                      for h in verdict.hits])
        self.backup_calls += 1
        polarity, probs = self.backup.predict(sentence)
        return PredictionRecord(sentence.sid, sentence.target_span, "backup",
                                polarity, probabilities=probs)

    def accuracy(self, corpus: Corpus) -> tuple[float, np.ndarray]:
        """Hybrid accuracy and 3x3 gold-by-predicted confusion counts."""
        confusion = np.zeros((3, 3), dtype=np.int64)
        for sentence in corpus:
            record = self.classify(sentence)
            confusion[label_to_index(sentence.polarity),
                      label_to_index(record.polarity)] += 1
        return float(np.trace(confusion)) / len(corpus), confusion

"""Review corpus handling: parsing, target splits, and polarity statistics.

The corpus format is JSON-lines, one target per line (a sentence with two
targets appears twice under the same ``sid``)::

    {"sid": "s1", "tokens": ["the", "pizza", "was", "great"],
     "target": [1, 2], "category": "FOOD", "polarity": "positive"}

Token indices are 0-based and the target span is half-open.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ContractError, EmptyCorpusError, ParseError, ValidationError

POLARITIES = ("negative", "neutral", "positive")
_LABEL_TO_INDEX = {label: i for i, label in enumerate(POLARITIES)}


@dataclass(frozen=True)
class Sentence:
    """One classification unit: a tokenized sentence with a single target."""

    sid: str
    tokens: tuple[str, ...]
    target_start: int
    target_end: int
    category: str
    polarity: str

    def __post_init__(self):
        if not 0 <= self.target_start < self.target_end <= len(self.tokens):
            raise ValidationError(
                f"sentence {self.sid}: target span [{self.target_start}, "
                f"{self.target_end}) out of bounds for {len(self.tokens)} tokens")
        if self.polarity not in POLARITIES:
            raise ValidationError(
                f"sentence {self.sid}: unknown polarity {self.polarity!r}")

    @property
    def target_span(self) -> tuple[int, int]:
        return (self.target_start, self.target_end)


@dataclass(frozen=True)
class SplitSentence:
    """Left context, target, and right context token lists."""

    left: tuple[str, ...]
    target: tuple[str, ...]
    right: tuple[str, ...]

    def __post_init__(self):
        if len(self.target) < 1:
            raise ValidationError("split sentence with empty target")


@dataclass
class Corpus:
    sentences: list[Sentence]
    split: str = "train"
    source: str = ""

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


def split_around_target(s: Sentence) -> SplitSentence:
    return SplitSentence(
        left=s.tokens[:s.target_start],
        target=s.tokens[s.target_start:s.target_end],
        right=s.tokens[s.target_end:],
    )


def parse_corpus(path, split: str = "train") -> Corpus:
    """Load and validate a JSON-lines corpus.

    Every malformed line raises a located error; nothing is silently skipped.
    Duplicate (sid, target span) pairs are rejected.
    """
    sentences: list[Sentence] = []
    seen: set[tuple[str, tuple[int, int]]] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line_no) from exc
            try:
                sid = str(obj["sid"])
                tokens = tuple(str(t) for t in obj["tokens"])
                start, end = (int(x) for x in obj["target"])
                category = str(obj["category"])
                polarity = str(obj["polarity"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"missing or malformed field: {exc}", line_no) from exc
            try:
                sentence = Sentence(sid, tokens, start, end, category, polarity)
            except ValidationError as exc:
                raise ParseError(str(exc), line_no) from exc
            key = (sid, (start, end))
            if key in seen:
                raise ParseError(f"duplicate (sid, span) pair {key}", line_no)
            seen.add(key)
            sentences.append(sentence)
    return Corpus(sentences, split=split, source=str(path))


def class_distribution(corpus: Corpus) -> dict[str, tuple[int, float]]:
    """Counts and one-decimal percentages per polarity, in label order."""
    if len(corpus) == 0:
        raise EmptyCorpusError("class_distribution of an empty corpus")
    counts = {label: 0 for label in POLARITIES}
    for s in corpus:
        counts[s.polarity] += 1
    n = len(corpus)
    return {label: (c, round(100.0 * c / n, 1)) for label, c in counts.items()}


def majority_label(corpus: Corpus) -> str:
    """Most frequent polarity; ties break toward the lower label index."""
    if len(corpus) == 0:
        raise EmptyCorpusError("majority_label of an empty corpus")
    counts = {label: 0 for label in POLARITIES}
    for s in corpus:
        counts[s.polarity] += 1
    return max(POLARITIES, key=lambda lbl: (counts[lbl], -_LABEL_TO_INDEX[lbl]))


def label_to_index(polarity: str) -> int:
    if polarity not in _LABEL_TO_INDEX:
        raise ContractError(f"unknown polarity {polarity!r}")
    return _LABEL_TO_INDEX[polarity]


def index_to_label(index: int) -> str:
    if not 0 <= index < len(POLARITIES):
        raise ContractError(f"class index {index} out of range")
    return POLARITIES[index]

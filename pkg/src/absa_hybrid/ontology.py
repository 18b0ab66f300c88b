"""Rule-based first-stage classifier over a lexicalized sentiment ontology.

Three mutually exclusive rules fire on matched surface forms:

1. generic expressions carry their polarity unconditionally;
2. aspect-specific expressions carry it only when the sentence's aspect
   category equals the expression's category;
3. context-dependent expressions map the sentence's aspect category to a
   polarity (no entry for the category means no hit).

The verdict is the unanimous polarity of all fired rules; mixed polarities
or zero hits are inconclusive and route the sentence to the backup model.
Neutral is never produced.

Matching is case-insensitive exact token match over unigrams and bigrams of
the whole sentence (contexts and target alike).  There is no negation
handling.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

from .dataset import Sentence
from .errors import ValidationError

RULE_GENERIC = 1
RULE_ASPECT = 2
RULE_CONTEXT = 3

_POLAR = ("positive", "negative")


@dataclass(frozen=True)
class Hit:
    rule: int
    form: str
    polarity: str


@dataclass(frozen=True)
class OntologyVerdict:
    outcome: str                      # "positive" | "negative" | "inconclusive"
    reason: str | None = None         # "conflict" | "nohit" when inconclusive
    hits: tuple[Hit, ...] = ()

    @property
    def conclusive(self) -> bool:
        return self.outcome in _POLAR


@dataclass
class Ontology:
    """Flat lexicalized extract: aspect lexicon plus three concept kinds."""

    aspects: dict[str, str] = field(default_factory=dict)
    generic: dict[str, str] = field(default_factory=dict)
    aspect_specific: dict[str, tuple[str, str]] = field(default_factory=dict)
    context_dependent: dict[str, dict[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        kinds = [set(self.generic), set(self.aspect_specific), set(self.context_dependent)]
        for i in range(len(kinds)):
            for j in range(i + 1, len(kinds)):
                overlap = kinds[i] & kinds[j]
                if overlap:
                    form = sorted(overlap)[0]
                    raise ValidationError(
                        f"surface form {form!r} appears in more than one concept kind")
        for form, polarity in self.generic.items():
            _check_polarity(form, polarity)
        for form, (_, polarity) in self.aspect_specific.items():
            _check_polarity(form, polarity)
        for form, table in self.context_dependent.items():
            if not table:
                raise ValidationError(f"context-dependent form {form!r} has an empty map")
            for polarity in table.values():
                _check_polarity(form, polarity)

    def __len__(self) -> int:
        return (len(self.aspects) + len(self.generic) + len(self.aspect_specific)
                + len(self.context_dependent))


def _check_polarity(form: str, polarity: str) -> None:
    if polarity not in _POLAR:
        raise ValidationError(
            f"form {form!r}: ontology polarity must be positive or negative, "
            f"got {polarity!r}")


def _surface_forms(tokens) -> list[str]:
    """Lowercased unigrams and bigrams, deduplicated in first-seen order."""
    lowered = [t.lower() for t in tokens]
    seen: dict[str, None] = {}
    for tok in lowered:
        seen.setdefault(tok, None)
    for a, b in zip(lowered, lowered[1:]):
        seen.setdefault(f"{a} {b}", None)
    return list(seen)


def find_hits(onto: Ontology, sentence: Sentence) -> list[Hit]:
    """All rule firings for the sentence; at most one per surface form."""
    hits: list[Hit] = []
    category = sentence.category
    for form in _surface_forms(sentence.tokens):
        if form in onto.generic:
            hits.append(Hit(RULE_GENERIC, form, onto.generic[form]))
        elif form in onto.aspect_specific:
            form_category, polarity = onto.aspect_specific[form]
            if form_category == category:
                hits.append(Hit(RULE_ASPECT, form, polarity))
        elif form in onto.context_dependent:
            table = onto.context_dependent[form]
            if category in table:
                hits.append(Hit(RULE_CONTEXT, form, table[category]))
    return hits


def classify(onto: Ontology, sentence: Sentence) -> OntologyVerdict:
    hits = find_hits(onto, sentence)
    if not hits:
        return OntologyVerdict("inconclusive", "nohit", ())
    polarities = {h.polarity for h in hits}
    if len(polarities) > 1:
        return OntologyVerdict("inconclusive", "conflict", tuple(hits))
    return OntologyVerdict(polarities.pop(), None, tuple(hits))


def load_ontology(path) -> Ontology:
    """Load the JSON ontology file (four arrays; see the bundled example)."""
    with open(path, encoding="utf-8") as fh:
        return _ontology_from_obj(json.load(fh), str(path))


def bundled_ontology() -> Ontology:
    """The miniature restaurant-domain ontology shipped with the package."""
    text = resources.files("absa_hybrid").joinpath("data/mini_ontology.json").read_text()
    return _ontology_from_obj(json.loads(text), "bundled mini_ontology.json")


def _ontology_from_obj(obj: dict, source: str) -> Ontology:
    try:
        aspects = {str(e["form"]).lower(): str(e["category"]) for e in obj.get("aspects", [])}
        generic = {str(e["form"]).lower(): str(e["polarity"]) for e in obj.get("generic", [])}
        aspect_specific = {
            str(e["form"]).lower(): (str(e["category"]), str(e["polarity"]))
            for e in obj.get("aspect_specific", [])}
        context_dependent = {
            str(e["form"]).lower(): {str(c): str(p) for c, p in e["polarities"].items()}
            for e in obj.get("context_dependent", [])}
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"{source}: malformed ontology entry: {exc}") from exc
    for kind_name, entries in (("generic", obj.get("generic", [])),
                               ("aspect_specific", obj.get("aspect_specific", [])),
                               ("context_dependent", obj.get("context_dependent", []))):
        forms = [str(e["form"]).lower() for e in entries]
        if len(forms) != len(set(forms)):
            dup = sorted({f for f in forms if forms.count(f) > 1})[0]
            raise ValidationError(f"{source}: duplicate form {dup!r} within {kind_name}")
    return Ontology(aspects, generic, aspect_specific, context_dependent)

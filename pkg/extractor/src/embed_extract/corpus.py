"""Minimal reader for the classifier's JSON-lines corpus format.

Only ``sid`` and ``tokens`` matter here.  A sentence with several targets
repeats its ``sid``; such lines must agree on the token list and extraction
emits one record set per sentence.
"""
from __future__ import annotations

import json


class CorpusError(Exception):
    pass


def read_sentences(path) -> list[tuple[str, list[str]]]:
    """Unique (sid, tokens) pairs, in first-seen order."""
    order: list[str] = []
    tokens_by_sid: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                sid = str(obj["sid"])
                tokens = [str(t) for t in obj["tokens"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}: line {line_no}: {exc}") from exc
            if not tokens:
                raise CorpusError(f"{path}: line {line_no}: empty token list")
            if sid in tokens_by_sid:
                if tokens_by_sid[sid] != tokens:
                    raise CorpusError(
                        f"{path}: line {line_no}: sid {sid!r} repeats with "
                        f"different tokens")
                continue
            tokens_by_sid[sid] = tokens
            order.append(sid)
    if not order:
        raise CorpusError(f"{path}: no sentences")
    return [(sid, tokens_by_sid[sid]) for sid in order]

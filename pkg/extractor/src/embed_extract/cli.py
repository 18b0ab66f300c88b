"""Command line for the extraction tool.

    extract --corpus reviews.jsonl --model ./bert-dir --out vectors.jsonl \
            --merge mean [--layers 9,10,11,12] [--static-out static.txt]

Exit codes: 0 success, 2 validation problems (bad corpus, bad model dir,
alignment failures, bad flags).
"""
from __future__ import annotations

import argparse
import sys

from .corpus import CorpusError
from .encoders import ModelError
from .extract import MERGE_POLICIES, AlignmentError, ExtractionJob, extract


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="embed-extract",
        description="Dump per-token, per-layer contextual vectors for a corpus")
    parser.add_argument("--corpus", required=True, help="JSON-lines corpus")
    parser.add_argument("--model", required=True,
                        help="local model directory (BERT-style transformers "
                             "dir, or an elmo-style seeded config)")
    parser.add_argument("--out", required=True, help="output store path")
    parser.add_argument("--merge", choices=list(MERGE_POLICIES), default="mean",
                        help="subtoken-to-word merge policy (default mean)")
    parser.add_argument("--layers",
                        help="comma-separated 1-based layer selection "
                             "(default: all layers)")
    parser.add_argument("--static-out",
                        help="also write non-contextual lookups for every "
                             "distinct corpus token")
    args = parser.parse_args(argv)

    layers = None
    if args.layers:
        try:
            layers = [int(x) for x in args.layers.split(",") if x.strip()]
        except ValueError:
            print(f"error: bad --layers value {args.layers!r}", file=sys.stderr)
            return 2
    try:
        job = ExtractionJob(args.corpus, args.model, args.out, args.merge,
                            layers, args.static_out)
        header = extract(job)
    except (CorpusError, ModelError, AlignmentError, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out} ({header['model']}, {header['layers']} layers, "
          f"dim {header['dim']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())

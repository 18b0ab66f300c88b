"""Command-line entry points.

Subcommands: ``stats``, ``train``, ``evaluate``, ``tune``, ``classify``,
``dump-attention``.  Every flag can also be given in a JSON config file
(``--config``); explicit flags win over the file, which wins over defaults.

Exit codes: 0 on success, 2 on usage/validation problems (missing files,
malformed inputs, bad flag combinations), 3 on training divergence.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .dataset import Corpus, class_distribution, parse_corpus, POLARITIES
from .embeddings import (ContextualEmbedder, ElmoCombiner, NonContextualEmbedder,
                         load_contextual, load_noncontextual)
from .errors import AbsaError, ConfigError, DivergenceError
from .hpo import TpeConfig, default_space, save_history, tune
from .hybrid import HybridClassifier, MajorityBackup, ModelBackup
from .model import ModelConfig
from .ontology import load_ontology
from .training import Hyperparams, evaluate, train


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(_Settings(args))
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (AbsaError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


class _Settings:
    """Flag > config-file > default resolution."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file: dict = {}
        if getattr(args, "config", None):
            with open(args.config, encoding="utf-8") as fh:
                self.file = json.load(fh)
            if not isinstance(self.file, dict):
                raise ConfigError(f"{args.config}: config must be a JSON object")

    def get(self, key: str, default=None):
        value = getattr(self.args, key.replace("-", "_"), None)
        if value is not None:
            return value
        if key in self.file:
            return self.file[key]
        return default

    def require(self, key: str):
        value = self.get(key)
        if value is None:
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")
        return value


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its entries")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--corpus", help="JSON-lines corpus path")
    p.add_argument("--out", help="output file path")


def _add_embedding_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embeddings", help="non-contextual embedding text file")
    p.add_argument("--contextual", help="contextual store JSON-lines file")
    p.add_argument("--combiner", choices=["bert", "elmo"],
                   help="layer combiner for a contextual store (default bert)")
    p.add_argument("--oov", choices=["zero", "hash"],
                   help="out-of-vocabulary policy for non-contextual lookups")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden-dim", type=int, help="LSTM size per direction (default 8)")
    p.add_argument("--hops", type=int, help="rotatory attention iterations (default 3)")
    p.add_argument("--method", type=int, choices=[0, 1, 2, 3, 4],
                   help="hierarchical attention method (default 0)")


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--momentum", type=float, help="momentum term")
    p.add_argument("--l2", type=float, help="L2 regularization coefficient")
    p.add_argument("--dropout", type=float, help="dropout rate")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--batch-size", type=int, help="examples per optimizer step")
    p.add_argument("--init-bound", type=float, help="uniform init bound")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="absa",
        description="Hybrid aspect-based sentiment classifier (ontology rules "
                    "with a neural backup)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="polarity distribution of a corpus")
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train the backup model")
    _add_common(p)
    _add_embedding_flags(p)
    _add_model_flags(p)
    _add_hyper_flags(p)
    p.add_argument("--trace", help="write the per-epoch trace as JSON-lines")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="accuracy of a model or the full hybrid")
    _add_common(p)
    _add_embedding_flags(p)
    p.add_argument("--checkpoint", help="model checkpoint path")
    p.add_argument("--ontology", help="ontology JSON; enables hybrid evaluation")
    p.add_argument("--backup", choices=["model", "majority"],
                   help="backup strategy for hybrid evaluation (default model)")
    p.add_argument("--train-corpus", help="training corpus for the majority label")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", help="TPE search over the training hyperparameters")
    _add_common(p)
    _add_embedding_flags(p)
    _add_model_flags(p)
    p.add_argument("--epochs", type=int, help="epochs per trial (default 5)")
    p.add_argument("--budget", type=int, help="number of trials (default 20)")
    p.add_argument("--val-corpus", help="held-out corpus; default splits --corpus 80/20")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("classify", help="hybrid predictions for a corpus")
    _add_common(p)
    _add_embedding_flags(p)
    p.add_argument("--checkpoint", help="model checkpoint path")
    p.add_argument("--ontology", help="ontology JSON (required)")
    p.add_argument("--backup", choices=["model", "majority"],
                   help="backup strategy (default model)")
    p.add_argument("--train-corpus", help="training corpus for the majority label")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("dump-attention", help="token-aligned attention scores")
    _add_common(p)
    _add_embedding_flags(p)
    p.add_argument("--checkpoint", help="model checkpoint path")
    p.set_defaults(func=cmd_dump_attention)

    return parser


# ---------------------------------------------------------------------------
# embedding plumbing


def _build_embedder(settings: _Settings, meta: dict | None = None,
                    leftovers: dict | None = None):
    """Construct the embedder from flags, cross-checked against checkpoint
    metadata when given.  Returns (embedder, metadata)."""
    contextual = settings.get("contextual")
    noncontextual = settings.get("embeddings")
    if contextual and noncontextual:
        raise ConfigError("give either --embeddings or --contextual, not both")
    if contextual:
        store = load_contextual(contextual)
        combiner_name = settings.get("combiner", "bert")
        if meta is not None:
            if meta.get("source") != "contextual":
                raise ConfigError("checkpoint was trained on non-contextual vectors")
            combiner_name = meta["combiner"]
            if store.dim != meta["dim"] or store.layer_count != meta["layers"]:
                raise ConfigError(
                    f"contextual store ({store.layer_count} layers, dim {store.dim}) "
                    f"does not match checkpoint ({meta['layers']} layers, "
                    f"dim {meta['dim']})")
        if combiner_name == "bert":
            embedder = ContextualEmbedder(store, "bert")
        else:
            combiner = ElmoCombiner(store.layer_count)
            if leftovers:
                combiner.raw.value[...] = leftovers["elmo.s_raw"]
                combiner.gamma.value[...] = leftovers["elmo.gamma"]
            embedder = ContextualEmbedder(store, combiner)
        new_meta = {"source": "contextual", "combiner": combiner_name,
                    "dim": store.dim, "layers": store.layer_count}
        return embedder, new_meta
    if noncontextual:
        oov = settings.get("oov", "zero")
        expected = meta.get("dim") if meta is not None else None
        if meta is not None and meta.get("source") != "noncontextual":
            raise ConfigError("checkpoint was trained on contextual vectors")
        store = load_noncontextual(noncontextual, expected_dim=expected, oov_policy=oov)
        return NonContextualEmbedder(store), {"source": "noncontextual",
                                              "dim": store.dim, "oov": oov}
    raise ConfigError("an embedding source is required (--embeddings or --contextual)")


def _load_model(settings: _Settings):
    ckpt = load_checkpoint(settings.require("checkpoint"))
    model, leftovers = restore_model(ckpt)
    embedder, _ = _build_embedder(settings, meta=ckpt.embedding, leftovers=leftovers)
    return model, embedder


def _check_store_alignment(embedder, corpus: Corpus) -> None:
    """Surface contextual-store/corpus mismatches at startup, not mid-run."""
    if isinstance(embedder, ContextualEmbedder):
        embedder.store.validate_against(corpus)


def _hyper(settings: _Settings) -> Hyperparams:
    return Hyperparams(
        learning_rate=float(settings.get("lr", 0.05)),
        momentum=float(settings.get("momentum", 0.9)),
        l2=float(settings.get("l2", 1e-4)),
        dropout=float(settings.get("dropout", 0.1)),
        epochs=int(settings.get("epochs", 20)),
        seed=int(settings.get("seed", 0)),
        batch_size=int(settings.get("batch_size", 1)),
        init_bound=float(settings.get("init_bound", 0.01)),
    )


def _model_config(settings: _Settings, embed_dim: int, dropout: float) -> ModelConfig:
    return ModelConfig(
        embed_dim=embed_dim,
        hidden_dim=int(settings.get("hidden_dim", 8)),
        hops=int(settings.get("hops", 3)),
        method=int(settings.get("method", 0)),
        dropout=dropout,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_stats(settings: _Settings) -> int:
    corpus = parse_corpus(settings.require("corpus"))
    dist = class_distribution(corpus)
    print(f"{'polarity':<10} {'count':>7} {'percent':>8}")
    for label in POLARITIES:
        count, pct = dist[label]
        print(f"{label:<10} {count:>7} {pct:>8.1f}")
    print(f"{'total':<10} {len(corpus):>7} {100.0:>8.1f}")
    return 0


def cmd_train(settings: _Settings) -> int:
    corpus = parse_corpus(settings.require("corpus"), split="train")
    embedder, meta = _build_embedder(settings)
    _check_store_alignment(embedder, corpus)
    hyper = _hyper(settings)
    config = _model_config(settings, embedder.dim, hyper.dropout)
    result = train(corpus, config, embedder, hyper)
    for entry in result.trace:
        print(f"epoch {entry['epoch']:>4}  loss {entry['loss']:.6f}  "
              f"train_acc {entry['train_acc']:.4f}")
    trace_path = settings.get("trace")
    if trace_path:
        with open(trace_path, "w", encoding="utf-8") as fh:
            for entry in result.trace:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    out = settings.require("out")
    save_checkpoint(out, result.model, meta, extra_params=embedder.parameters())
    print(f"checkpoint written to {out}")
    return 0


def _build_backup(settings: _Settings):
    strategy = settings.get("backup", "model")
    if strategy == "majority":
        train_path = settings.get("train_corpus")
        if train_path is None:
            raise ConfigError("--backup majority needs --train-corpus")
        return MajorityBackup(parse_corpus(train_path, split="train"))
    model, embedder = _load_model(settings)
    return ModelBackup(model, embedder)


def cmd_evaluate(settings: _Settings) -> int:
    corpus = parse_corpus(settings.require("corpus"), split="test")
    ontology_path = settings.get("ontology")
    if ontology_path is None:
        model, embedder = _load_model(settings)
        _check_store_alignment(embedder, corpus)
        result = evaluate(corpus, model, embedder)
        print(f"accuracy {result.accuracy:.4f}  ({result.size} sentences)")
        _print_confusion(result.confusion)
        return 0
    backup = _build_backup(settings)
    if isinstance(backup, ModelBackup):
        _check_store_alignment(backup.embedder, corpus)
    hybrid = HybridClassifier(load_ontology(ontology_path), backup)
    accuracy, confusion = hybrid.accuracy(corpus)
    print(f"hybrid accuracy {accuracy:.4f}  ({len(corpus)} sentences, "
          f"{hybrid.backup_calls} routed to backup)")
    _print_confusion(confusion)
    return 0


def _print_confusion(confusion) -> None:
    header = "gold/pred"
    print(f"{header:<12}" + "".join(f"{lbl:>10}" for lbl in POLARITIES))
    for i, label in enumerate(POLARITIES):
        print(f"{label:<12}" + "".join(f"{int(c):>10}" for c in confusion[i]))


def cmd_tune(settings: _Settings) -> int:
    corpus = parse_corpus(settings.require("corpus"), split="train")
    seed = int(settings.get("seed", 0))
    val_path = settings.get("val_corpus")
    if val_path is not None:
        train_corpus, val_corpus = corpus, parse_corpus(val_path, split="val")
    else:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(corpus))
        cut = max(1, int(0.8 * len(corpus)))
        if cut >= len(corpus):
            raise ConfigError("corpus too small to split; give --val-corpus")
        train_corpus = Corpus([corpus.sentences[i] for i in order[:cut]], "train")
        val_corpus = Corpus([corpus.sentences[i] for i in order[cut:]], "val")

    epochs = int(settings.get("epochs", 5))
    budget = int(settings.get("budget", 20))
    probe, _ = _build_embedder(settings)
    _check_store_alignment(probe, corpus)

    def objective(point: dict[str, float]) -> float:
        embedder, _ = _build_embedder(settings)
        hyper = Hyperparams(
            learning_rate=point["learning_rate"], momentum=point["momentum"],
            l2=point["l2"], dropout=point["dropout"], epochs=epochs, seed=seed,
            batch_size=int(settings.get("batch_size", 1)))
        config = _model_config(settings, embedder.dim, hyper.dropout)
        result = train(train_corpus, config, embedder, hyper)
        return evaluate(val_corpus, result.model, embedder).accuracy

    best, history = tune(default_space(), objective, budget,
                         TpeConfig(), seed=seed)
    out = settings.get("out")
    if out:
        save_history(history, out)
        print(f"history written to {out}")
    if best is None:
        print("no successful trials")
        return 0
    print(f"best validation accuracy {best.value:.4f} at "
          + json.dumps(best.point, sort_keys=True))
    return 0


def cmd_classify(settings: _Settings) -> int:
    corpus = parse_corpus(settings.require("corpus"), split="test")
    backup = _build_backup(settings)
    if isinstance(backup, ModelBackup):
        _check_store_alignment(backup.embedder, corpus)
    hybrid = HybridClassifier(load_ontology(settings.require("ontology")),
                              backup)
    records = [hybrid.classify(s) for s in corpus]
    out = settings.get("out")
    lines = [json.dumps(r.to_dict(), sort_keys=True) for r in records]
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        for line in lines:
            print(line)
    by_stage = {"ontology": 0, "backup": 0}
    for r in records:
        by_stage[r.stage] += 1
    print(f"classified {len(records)} sentences: {by_stage['ontology']} by ontology, "
          f"{by_stage['backup']} by backup", file=sys.stderr)
    return 0


def cmd_dump_attention(settings: _Settings) -> int:
    corpus = parse_corpus(settings.require("corpus"), split="test")
    model, embedder = _load_model(settings)
    _check_store_alignment(embedder, corpus)
    out = settings.require("out")
    count = 0
    with open(out, "w", encoding="utf-8") as fh:
        for sentence in corpus:
            for record in flatten_attention(model.attention_trace(sentence, embedder)):
                fh.write(json.dumps(record, sort_keys=True) + "\n")
                count += 1
    print(f"wrote {count} attention records to {out}")
    return 0


def flatten_attention(trace: dict) -> list[dict]:
    """One record per (hop, side) plus one per hierarchical rescale."""
    out = []
    base = {"sid": trace["sid"], "target_span": trace["target_span"]}
    tokens = {"left": trace["tokens"]["left"], "right": trace["tokens"]["right"],
              "target_left": trace["tokens"]["target"],
              "target_right": trace["tokens"]["target"]}
    for hop in trace["hops"]:
        for side in ("left", "right", "target_left", "target_right"):
            if not hop[side]:        # empty context contributes no record
                continue
            out.append({**base, "hop": hop["hop"], "side": side,
                        "tokens": tokens[side], "scores": hop[side]})
        if hop["hier"] is not None:
            out.append({**base, "hop": hop["hop"], "side": "hierarchical",
                        "groups": hop["hier"]})
    final = trace.get("final_hier")
    if final is not None:
        out.append({**base, "hop": None, "side": "hierarchical", "groups": final})
    return out


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance gate: one test per criterion, each printing a PASS line with
its measured margin (a failed assert leaves the pytest failure as the fail
line).  Run with ``pytest tests/test_acceptance.py -v -s``.
"""
import json
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import lcr_oracle
from absa_hybrid import numerics as nm
from absa_hybrid.cli import main
from absa_hybrid.dataset import Sentence, label_to_index, parse_corpus
from absa_hybrid.embeddings import (ElmoWeights, bert_combine, build_cooccurrence,
                                    elmo_combine, glove_train, load_contextual)
from absa_hybrid.hpo import Dimension, SearchSpace, tune
from absa_hybrid.hybrid import HybridClassifier, MajorityBackup
from absa_hybrid.model import (LcrRotModel, ModelConfig, encode,
                               hierarchical_rescale, rotatory_hop, _nodes)
from absa_hybrid.numerics import Tensor, gradient_check
from absa_hybrid.ontology import Ontology, bundled_ontology, classify, find_hits
from absa_hybrid.toydata import toy_corpus, toy_embedder
from absa_hybrid.training import (Hyperparams, evaluate, init_uniform,
                                  loss as loss_fn, train)

FIXTURES = Path(__file__).parent / "fixtures"


def _report(name: str, detail: str) -> None:
    print(f"\nACCEPTANCE PASS  {name}: {detail}")


class _FixedEmbedder:
    def __init__(self, vectors):
        self._vectors = vectors
        self.dim = vectors[0].shape[0]

    def vectors(self, sentence, tape=None):
        return [Tensor(v) for v in self._vectors]

    def parameters(self):
        return []


def test_gradient_fidelity_all_methods():
    """Tape gradients vs central differences for methods 0..4 at d=4, n=2,
    L=T=R=3, max relative error <= 1e-4, total runtime < 60 s."""
    started = time.time()
    rng = np.random.default_rng(1234)
    d_e = 3
    vectors = [rng.uniform(-1, 1, d_e) for _ in range(9)]
    sentence = Sentence("g", tuple(f"t{i}" for i in range(9)), 3, 6,
                        "FOOD", "positive")
    embedder = _FixedEmbedder(vectors)
    worst = {}
    for method in range(5):
        config = ModelConfig(embed_dim=d_e, hidden_dim=4, hops=2, method=method)
        model = LcrRotModel(config)
        init_uniform(model.params, 0.5, seed=100 + method)

        def forward(tape):
            probs = model.forward(sentence, embedder, tape)
            return loss_fn(probs, label_to_index(sentence.polarity),
                           model.params, l2=0.01)

        report = gradient_check(forward, model.params, step=1e-5)
        worst[method] = report.max_relative_error
        assert report.max_relative_error <= 1e-4, (method, report.per_param)
    elapsed = time.time() - started
    assert elapsed < 60.0
    _report("gradient fidelity",
            f"max rel err per method {({m: f'{e:.2e}' for m, e in worst.items()})}, "
            f"{elapsed:.1f}s")


def test_forward_matches_straight_line_oracle():
    """Full forward at d=1, L=2, T=1, R=2, n=1 within 1e-12 of an
    independently written straight-line implementation."""
    rng = np.random.default_rng(7)
    d_e = 2
    vectors = [rng.uniform(-1, 1, d_e) for _ in range(5)]
    sentence = Sentence("o", ("a", "b", "T", "c", "d"), 2, 3, "FOOD", "neutral")
    embedder = _FixedEmbedder(vectors)
    worst = 0.0
    for method in range(5):
        config = ModelConfig(embed_dim=d_e, hidden_dim=1, hops=1, method=method)
        model = LcrRotModel(config)
        init_uniform(model.params, 0.7, seed=50 + method)
        got = model.forward(sentence, embedder).values
        want = lcr_oracle.forward(vectors[:2], vectors[2:3], vectors[3:],
                                  {p.name: p.value for p in model.params},
                                  hops=1, method=method)
        diff = float(np.max(np.abs(got - want)))
        worst = max(worst, diff)
        assert diff <= 1e-12
    _report("forward oracle", f"max abs deviation {worst:.2e} over methods 0..4")


def test_attention_invariants_randomized():
    """10^3 randomized forwards: every score distribution sums to 1 within
    1e-12, pooled vectors stay in their sequences' elementwise hulls, and
    method-0 output ignores hierarchical parameters."""
    rng = np.random.default_rng(99)
    checked_sums = 0
    for trial in range(1000):
        method = int(rng.integers(0, 5))
        hops = int(rng.integers(1, 4))
        d = int(rng.integers(1, 3))
        d_e = int(rng.integers(1, 4))
        lengths = (int(rng.integers(0, 4)), int(rng.integers(1, 4)),
                   int(rng.integers(0, 4)))
        config = ModelConfig(embed_dim=d_e, hidden_dim=d, hops=hops, method=method)
        model = LcrRotModel(config)
        init_uniform(model.params, 0.8, seed=int(rng.integers(1 << 31)))
        embedded = tuple([Tensor(rng.uniform(-1, 1, d_e)) for _ in range(n)]
                         for n in lengths)
        probs, trace = model.forward_embedded(embedded, want_trace=True)
        assert abs(probs.values.sum() - 1.0) <= 1e-12
        for entry in trace:
            scores = entry["scores"]
            if scores is not None:
                for s in scores.values():
                    if s is None:
                        continue
                    assert np.all(s.values >= 0.0)
                    assert abs(s.values.sum() - 1.0) <= 1e-12
                    checked_sums += 1
            if entry["hier"] is not None:
                for s in entry["hier"].values():
                    assert abs(s.values.sum() - 1.0) <= 1e-12
                    checked_sums += 1
        # convex hull of one hop
        nodes = _nodes(None, model.params)
        hiddens = encode(embedded, nodes, config)
        query = nm.mean_pool(hiddens[1])
        hop = rotatory_hop(hiddens, (query, query), nodes)
        for vec, seq in zip(hop.vectors,
                            (hiddens[0], hiddens[2], hiddens[1], hiddens[1])):
            if not seq:
                continue
            stacked = np.stack([h.values for h in seq])
            assert np.all(vec.values >= stacked.min(axis=0) - 1e-12)
            assert np.all(vec.values <= stacked.max(axis=0) + 1e-12)
        if method == 0:
            before = probs.values.copy()
            for group in ("all", "context", "target"):
                model.params[f"hier.{group}.w"].value[...] = rng.uniform(-3, 3, 2 * d)
                model.params[f"hier.{group}.b"].value[...] = rng.uniform(-3, 3)
            after = model.forward_embedded(embedded).values
            assert np.array_equal(before, after)
    _report("attention invariants",
            f"1000 forwards, {checked_sums} score distributions checked")


def test_hierarchical_symmetry():
    """Identical vectors rescale to exactly 1/4 (method 1) and identical
    pairs to 1/2 (method 3), within 1e-12."""
    from absa_hybrid.model import build_params
    params = build_params(ModelConfig(embed_dim=2, hidden_dim=3))
    init_uniform(params, 0.6, seed=5)
    nodes = _nodes(None, params)
    rng = np.random.default_rng(3)

    v = rng.uniform(-1, 1, 6)
    out, alphas = hierarchical_rescale(tuple(Tensor(v.copy()) for _ in range(4)),
                                       1, nodes)
    for o in out:
        assert np.max(np.abs(o.values - v / 4.0)) <= 1e-12
    assert np.max(np.abs(alphas["all"].values - 0.25)) <= 1e-12

    ctx, tgt = rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 6)
    out, alphas = hierarchical_rescale(
        (Tensor(ctx.copy()), Tensor(ctx.copy()),
         Tensor(tgt.copy()), Tensor(tgt.copy())), 3, nodes)
    for o, base in zip(out, (ctx, ctx, tgt, tgt)):
        assert np.max(np.abs(o.values - base / 2.0)) <= 1e-12
    assert np.max(np.abs(alphas["context"].values - 0.5)) <= 1e-12
    assert np.max(np.abs(alphas["target"].values - 0.5)) <= 1e-12
    _report("hierarchical symmetry", "method 1 -> 1/4 and method 3 -> 1/2 exact")


@pytest.mark.parametrize("method", [0, 1, 2, 3, 4])
def test_toy_learning(method):
    """Keyword-separable corpus (300 train / 100 test): >= 95% train and
    >= 90% test accuracy within 200 epochs and five minutes per method."""
    started = time.time()
    train_corpus = toy_corpus(300, seed=1, split="train")
    test_corpus = toy_corpus(100, seed=2, split="test")
    embedder = toy_embedder(dim=8, seed=17)
    config = ModelConfig(embed_dim=8, hidden_dim=6, hops=2, method=method)
    base = Hyperparams(learning_rate=0.07, momentum=0.9, l2=1e-5, dropout=0.05,
                       epochs=10, seed=3)

    model = state = None
    epochs_done = 0
    train_acc = test_acc = 0.0
    while epochs_done < 200:
        chunk = train(train_corpus, config, embedder,
                      replace(base, seed=base.seed + epochs_done),
                      model=model, state=state, epoch_offset=epochs_done)
        model, state = chunk.model, chunk.state
        epochs_done += base.epochs
        train_acc = chunk.trace[-1]["train_acc"]
        if train_acc >= 0.95:
            test_acc = evaluate(test_corpus, model, embedder).accuracy
            if test_acc >= 0.90:
                break
    elapsed = time.time() - started
    assert train_acc >= 0.95, f"train accuracy {train_acc} after {epochs_done} epochs"
    assert test_acc >= 0.90, f"test accuracy {test_acc} after {epochs_done} epochs"
    assert elapsed < 300.0
    _report(f"toy learning method {method}",
            f"train {train_acc:.3f} / test {test_acc:.3f} after {epochs_done} "
            f"epochs in {elapsed:.0f}s")


def test_ontology_suite():
    """Twelve hand-built rule cases classify exactly as designed; over 10^3
    random ontology/sentence pairs at most one rule fires per surface form
    and classify never returns neutral."""
    mini = bundled_ontology()
    cases = [
        (["the", "pizza", "was", "great"], "FOOD", (1, 2), ("positive", None)),
        (["terrible", "service"], "SERVICE", (1, 2), ("negative", None)),
        (["food", "was", "top", "notch"], "FOOD", (0, 1), ("positive", None)),
        (["the", "pasta", "was", "delicious"], "FOOD", (1, 2), ("positive", None)),
        (["the", "waiter", "was", "rude"], "SERVICE", (1, 2), ("negative", None)),
        (["the", "pizza", "arrived", "fast"], "FOOD", (1, 2),
         ("inconclusive", "nohit")),                      # category gate
        (["cheap", "prices"], "PRICE", (1, 2), ("positive", None)),
        (["cheap", "decor"], "AMBIENCE", (1, 2), ("negative", None)),
        (["cheap", "staff"], "SERVICE", (1, 2), ("inconclusive", "nohit")),
        (["great", "but", "rude", "service"], "SERVICE", (3, 4),
         ("inconclusive", "conflict")),
        (["the", "pizza", "was", "ok"], "FOOD", (1, 2), ("inconclusive", "nohit")),
        (["great", "amazing", "pizza"], "FOOD", (2, 3), ("positive", None)),
    ]
    for tokens, category, span, expected in cases:
        s = Sentence("a", tuple(tokens), span[0], span[1], category, "positive")
        verdict = classify(mini, s)
        assert (verdict.outcome, verdict.reason) == expected, tokens

    rng = np.random.default_rng(11)
    forms = [f"w{i}" for i in range(12)]
    categories = ["FOOD", "SERVICE", "PRICE", "AMBIENCE"]
    polar = ["positive", "negative"]
    for _ in range(1000):
        generic, aspect, context = {}, {}, {}
        for form in forms:
            kind = int(rng.integers(0, 4))
            if kind == 1:
                generic[form] = polar[int(rng.integers(2))]
            elif kind == 2:
                aspect[form] = (categories[int(rng.integers(4))],
                                polar[int(rng.integers(2))])
            elif kind == 3:
                context[form] = {categories[int(rng.integers(4))]:
                                 polar[int(rng.integers(2))]}
        onto = Ontology(generic=generic, aspect_specific=aspect,
                        context_dependent=context)
        tokens = tuple(forms[int(rng.integers(len(forms)))]
                       for _ in range(int(rng.integers(1, 9))))
        s = Sentence("p", tokens, 0, 1, categories[int(rng.integers(4))],
                     "positive")
        hits = find_hits(onto, s)
        hit_forms = [h.form for h in hits]
        assert len(hit_forms) == len(set(hit_forms))
        assert classify(onto, s).outcome in ("positive", "negative",
                                             "inconclusive")
    _report("ontology suite", "12/12 rule cases exact, 1000 random pairs clean")


def test_hybrid_routing():
    """Backup invocations equal the number of inconclusive verdicts exactly;
    majority strategy maps every inconclusive case to the train majority."""
    mini = bundled_ontology()
    mixed = parse_corpus(FIXTURES / "hybrid_mixed.jsonl", split="test")
    train20 = parse_corpus(FIXTURES / "corpus20.jsonl", split="train")

    calls = {"n": 0}

    class CountingMajority(MajorityBackup):
        def predict(self, sentence):
            calls["n"] += 1
            return super().predict(sentence)

    backup = CountingMajority(train20)
    hybrid = HybridClassifier(mini, backup)
    records = [hybrid.classify(s) for s in mixed]
    inconclusive = sum(1 for s in mixed if not classify(mini, s).conclusive)
    assert calls["n"] == inconclusive == hybrid.backup_calls
    for s, record in zip(mixed, records):
        if record.stage == "backup":
            assert record.polarity == backup.label == "positive"
        else:
            assert record.polarity in ("positive", "negative")
    _report("hybrid routing",
            f"{inconclusive} inconclusive -> {calls['n']} backup calls, "
            f"majority label {backup.label!r}")


def test_combiner_correctness():
    """bert_combine equals the index 9..12 sum oracle and ignores layers
    1..8; elmo_combine is linear and honors one-hot selection at 1e-12."""
    rng = np.random.default_rng(21)
    layers = [rng.uniform(-1, 1, 7) for _ in range(12)]
    want = layers[8] + layers[9] + layers[10] + layers[11]
    got = bert_combine([Tensor(h) for h in layers]).values
    assert np.max(np.abs(got - want)) <= 1e-12
    noisy = list(layers)
    for i in range(8):
        noisy[i] = rng.uniform(-100, 100, 7)
    assert np.array_equal(bert_combine([Tensor(h) for h in noisy]).values, got)

    h, hp = rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 5)
    weights = ElmoWeights([0.2, 0.3, 0.5], gamma=0.7)

    def combine(layer):
        return elmo_combine([Tensor(layer), Tensor(np.zeros(5)),
                             Tensor(np.zeros(5))], weights).values

    lhs = combine(1.5 * h - 2.0 * hp)
    rhs = 1.5 * combine(h) - 2.0 * combine(hp)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12

    one_hot = elmo_combine([Tensor(x) for x in (h, hp, h)],
                           ElmoWeights([0.0, 1.0, 0.0], gamma=2.0)).values
    assert np.max(np.abs(one_hot - 2.0 * hp)) <= 1e-12
    _report("combiner correctness", "bert index oracle and elmo identities exact")


def test_glove_toy():
    """Five-word corpus: training cuts the cost by >= 90%; two-word table:
    fitted dot-plus-biases reproduce log counts within 0.1."""
    corpus5 = [["tasty", "food", "and", "good", "wine"],
               ["good", "food", "and", "tasty", "wine"],
               ["wine", "and", "food", "good", "tasty"]]
    table = build_cooccurrence(corpus5, window=2)
    assert len(table.vocab) == 5
    model, trace = glove_train(table, dim=3, epochs=2000, lr=0.03, seed=0)
    reduction = 1.0 - trace[-1] / trace[0]
    assert reduction >= 0.90, f"cost reduced by {reduction:.2%}"

    table2 = build_cooccurrence([["a", "b"] * 6], window=1)
    model2, _ = glove_train(table2, dim=2, epochs=3000, lr=0.05, seed=1)
    worst = 0.0
    for i in range(2):
        for k in range(2):
            x = table2.counts[i, k]
            if x <= 0:
                continue
            pred = (model2.vectors[i] @ model2.vectors[k]
                    + model2.biases[i] + model2.biases[k])
            worst = max(worst, abs(pred - math.log(x)))
    assert worst < 0.1
    _report("glove toy",
            f"cost reduction {reduction:.1%}, two-word fit error {worst:.3f}")


def test_tpe_benchmark():
    """-(x-0.3)^2 on [0,1] with budget 60: best within 0.05 of the optimum
    in >= 80% of 20 seeded runs, and the median best beats pure random
    search on paired seeds."""
    space = SearchSpace((Dimension("x", 0.0, 1.0),))

    def objective(point):
        return -(point["x"] - 0.3) ** 2

    hits = 0
    tpe_best, random_best = [], []
    for seed in range(20):
        best_t, _ = tune(space, objective, budget=60, seed=seed)
        best_r, _ = tune(space, objective, budget=60, seed=seed, sampler="random")
        tpe_best.append(best_t.value)
        random_best.append(best_r.value)
        if abs(best_t.point["x"] - 0.3) <= 0.05:
            hits += 1
    assert hits >= 16, f"only {hits}/20 runs within 0.05"
    assert np.median(tpe_best) > np.median(random_best)
    _report("tpe benchmark",
            f"{hits}/20 within 0.05; median best {np.median(tpe_best):.2e} vs "
            f"random {np.median(random_best):.2e}")


def test_table_statistics(capsys, tmp_path):
    """stats output matches hand counts on the bundled fixture exactly and
    reproduces the published class percentages on same-shaped data."""
    code = main(["stats", "--corpus", str(FIXTURES / "corpus20.jsonl")])
    out = capsys.readouterr().out
    assert code == 0
    lines = {line.split()[0]: line.split()[1:] for line in out.splitlines()[1:]}
    assert lines["positive"] == ["9", "45.0"]
    assert lines["negative"] == ["6", "30.0"]
    assert lines["neutral"] == ["5", "25.0"]

    shapes = {
        "2016-train": (("positive", 351), ("neutral", 19), ("negative", 130)),
        "2015-test": (("positive", 537), ("neutral", 410), ("negative", 53)),
    }
    expected = {
        "2016-train": {"positive": 70.2, "neutral": 3.8, "negative": 26.0},
        "2015-test": {"positive": 53.7, "neutral": 41.0, "negative": 5.3},
    }
    for name, spec in shapes.items():
        rows = []
        for polarity, count in spec:
            rows.extend({"sid": f"{name}-{polarity}-{j}", "tokens": ["x", "t"],
                         "target": [1, 2], "category": "FOOD",
                         "polarity": polarity} for j in range(count))
        path = tmp_path / f"{name}.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        code = main(["stats", "--corpus", str(path)])
        out = capsys.readouterr().out
        assert code == 0
        got = {line.split()[0]: float(line.split()[2])
               for line in out.splitlines()[1:] if not line.startswith("total")}
        for polarity, pct in expected[name].items():
            assert abs(got[polarity] - pct) <= 0.1, (name, polarity, got)
    _report("table statistics",
            "bundled fixture exact; 70.2/3.8/26.0 and 53.7/41.0/5.3 reproduced")


def test_contextual_fixture_round_trip():
    """The checked-in synthetic contextual store loads cleanly and aligns
    with its companion corpus (the primary suite never needs the extractor)."""
    store = load_contextual(FIXTURES / "contextual_small.jsonl")
    corpus = parse_corpus(FIXTURES / "ctx_corpus.jsonl", split="test")
    store.validate_against(corpus)
    assert store.layer_count == 5 and store.dim == 6
    _report("contextual fixture round trip",
            f"{len(store)} occurrences, {store.layer_count} layers, dim {store.dim}")

import logging
import math

import numpy as np
import pytest

from absa_hybrid.dataset import Corpus, Sentence, label_to_index
from absa_hybrid.errors import ConfigError, DivergenceError, EmptyCorpusError
from absa_hybrid.model import LcrRotModel, ModelConfig
from absa_hybrid.numerics import ParameterSet, Tape, Tensor, backward
from absa_hybrid.toydata import toy_corpus, toy_embedder
from absa_hybrid.training import (Hyperparams, OptimizerState, evaluate,
                                  init_uniform, loss, sgd_momentum_step, train)


class TestLoss:
    def test_one_hot_correct_is_zero(self):
        out = loss(Tensor([0.0, 1.0, 0.0]), 1, [], l2=0.0)
        assert out.item() == 0.0

    def test_uniform_is_log_three(self):
        out = loss(Tensor([1 / 3, 1 / 3, 1 / 3]), 2, [], l2=0.0)
        assert abs(out.item() - math.log(3.0)) < 1e-12

    def test_random_case_matches_hand_oracle(self):
        rng = np.random.default_rng(0)
        probs = rng.dirichlet(np.ones(3))
        params = ParameterSet()
        w = params.add("w", (2, 3))
        b = params.add("b", (3,))            # bias: excluded from the penalty
        w.value[...] = rng.uniform(-1, 1, (2, 3))
        b.value[...] = rng.uniform(-1, 1, 3)
        l2 = 0.37
        expected = -math.log(probs[1]) + l2 * float((w.value ** 2).sum())
        got = loss(Tensor(probs), 1, params, l2=l2).item()
        assert abs(got - expected) < 1e-10

    def test_zero_probability_clamped_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING):
            out = loss(Tensor([1.0, 0.0, 0.0]), 1, [], l2=0.0)
        assert np.isfinite(out.item())
        assert out.item() == pytest.approx(-math.log(1e-12))
        assert any("clamped" in r.message for r in caplog.records)

    def test_nonnegative(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            probs = rng.dirichlet(np.ones(3))
            assert loss(Tensor(probs), int(rng.integers(3)), [], 0.0).item() >= 0.0

    def test_l2_term_monotone_in_weight_magnitude(self):
        params = ParameterSet()
        w = params.add("w", (2, 2))
        w.value[...] = 0.5
        probs = Tensor([0.2, 0.5, 0.3])
        base = loss(probs, 1, params, l2=0.1).item()
        w.value[0, 0] = 0.9
        grown = loss(probs, 1, params, l2=0.1).item()
        assert grown > base
        w.value[0, 0] = -1.2              # sign does not matter, magnitude does
        assert loss(probs, 1, params, l2=0.1).item() > grown


class TestInitUniform:
    def test_within_bound(self):
        params = ParameterSet()
        params.add("a", (50, 50))
        init_uniform(params, 0.01, seed=0)
        assert np.all(np.abs(params["a"].value) <= 0.01)

    def test_same_seed_identical(self):
        p1, p2 = ParameterSet(), ParameterSet()
        for ps in (p1, p2):
            ps.add("a", (10, 10))
            ps.add("b", (10,))
            init_uniform(ps, 0.5, seed=42)
        assert p1["a"].value.tobytes() == p2["a"].value.tobytes()
        assert p1["b"].value.tobytes() == p2["b"].value.tobytes()

    def test_mean_within_three_sigma(self):
        params = ParameterSet()
        params.add("a", (100, 100))
        bound = 0.3
        init_uniform(params, bound, seed=7)
        n = 100 * 100
        sigma_mean = bound / math.sqrt(3.0 * n)
        assert abs(params["a"].value.mean()) <= 3.0 * sigma_mean

    def test_nontrainable_untouched(self):
        params = ParameterSet()
        frozen = params.add("f", (3,), trainable=False)
        frozen.value[...] = 9.0
        init_uniform(params, 0.1, seed=0)
        assert np.all(frozen.value == 9.0)


class TestSgdMomentum:
    def _param(self, value=1.0):
        params = ParameterSet()
        p = params.add("x", ())
        p.value[...] = value
        return params, p

    def test_zero_momentum_is_plain_sgd(self):
        params, p = self._param(2.0)
        state = OptimizerState.for_params(params)
        p.grad[...] = 0.5
        sgd_momentum_step(params, state, lr=0.1, momentum=0.0)
        assert float(p.value) == pytest.approx(2.0 - 0.1 * 0.5)
        assert float(p.grad) == 0.0

    def test_two_steps_with_constant_gradient(self):
        params, p = self._param(0.0)
        state = OptimizerState.for_params(params)
        g, lr, m = 0.4, 0.05, 0.9
        p.grad[...] = g
        sgd_momentum_step(params, state, lr, m)
        first = float(p.value)
        p.grad[...] = g
        sgd_momentum_step(params, state, lr, m)
        second_delta = float(p.value) - first
        assert first == pytest.approx(-lr * g)
        assert second_delta == pytest.approx(-lr * g * (1.0 + m))

    def test_quadratic_converges(self):
        # minimize x^2 / 2 (gradient is x) from x = 1; the oracle is the
        # recurrence itself run on plain floats.  With this velocity
        # convention the damped oscillation sits at |x| ~ 0.067 after 50
        # steps and needs ~57 to pass 0.05, so the frozen bounds are the
        # oracle's own values.
        params, p = self._param(1.0)
        state = OptimizerState.for_params(params)
        x, v = 1.0, 0.0
        for _ in range(50):
            v = 0.9 * v - 0.1 * x
            x = x + v
        for _ in range(50):
            p.grad[...] = float(p.value)
            sgd_momentum_step(params, state, lr=0.1, momentum=0.9)
        assert float(p.value) == pytest.approx(x, abs=1e-12)
        assert abs(float(p.value)) < 0.07
        for _ in range(10):               # ten more steps clear the 0.05 bound
            p.grad[...] = float(p.value)
            sgd_momentum_step(params, state, lr=0.1, momentum=0.9)
        assert abs(float(p.value)) < 0.05


@pytest.fixture(scope="module")
def tiny_setup():
    corpus = toy_corpus(12, seed=3)
    embedder = toy_embedder(dim=4, seed=17)
    config = ModelConfig(embed_dim=4, hidden_dim=2, hops=1)
    return corpus, embedder, config


class TestTrain:
    def test_zero_lr_leaves_parameters_unchanged(self, tiny_setup):
        corpus, embedder, config = tiny_setup
        kwargs = dict(learning_rate=0.0, momentum=0.0, l2=0.0, dropout=0.0, seed=1)
        trained = train(corpus, config, embedder, Hyperparams(epochs=2, **kwargs))
        untouched = train(corpus, config, embedder, Hyperparams(epochs=0, **kwargs))
        for p in trained.model.params:
            assert p.value.tobytes() == untouched.model.params[p.name].value.tobytes()

    def test_same_seed_identical_trace(self, tiny_setup):
        corpus, embedder, config = tiny_setup
        hyper = Hyperparams(learning_rate=0.05, epochs=2, seed=5, dropout=0.2)
        r1 = train(corpus, config, embedder, hyper)
        r2 = train(corpus, config, embedder, hyper)
        assert r1.trace == r2.trace
        for p1, p2 in zip(r1.model.params, r2.model.params):
            assert p1.value.tobytes() == p2.value.tobytes()

    def test_trace_epochs_monotone(self, tiny_setup):
        corpus, embedder, config = tiny_setup
        hyper = Hyperparams(epochs=3, seed=2)
        result = train(corpus, config, embedder, hyper)
        assert [e["epoch"] for e in result.trace] == [1, 2, 3]

    def test_empty_corpus_rejected(self, tiny_setup):
        _, embedder, config = tiny_setup
        with pytest.raises(EmptyCorpusError):
            train(Corpus([]), config, embedder, Hyperparams(epochs=1))

    def test_divergence_reports_location(self, tiny_setup):
        corpus, embedder, config = tiny_setup
        hyper = Hyperparams(learning_rate=1e8, l2=0.01, momentum=0.9,
                            dropout=0.0, epochs=30, seed=0)
        with pytest.raises(DivergenceError) as err:
            with np.errstate(all="ignore"):
                train(corpus, config, embedder, hyper)
        assert err.value.epoch is not None

    def test_single_step_decreases_loss_on_frozen_example(self, tiny_setup):
        corpus, embedder, config = tiny_setup
        model = LcrRotModel(config)
        init_uniform(model.params, 0.5, seed=11)
        state = OptimizerState.for_params(model.params)
        sentence = corpus.sentences[0]
        gold = label_to_index(sentence.polarity)

        def current_loss(tape=None):
            probs = model.forward(sentence, embedder, tape)
            return loss(probs, gold, model.params, l2=0.0)

        before = current_loss().item()
        tape = Tape()
        ell = current_loss(tape)
        backward(tape, ell)
        sgd_momentum_step(model.params, state, lr=1e-4, momentum=0.0)
        after = current_loss().item()
        assert after < before


class TestEvaluate:
    def test_perfect_predictions(self, tiny_setup):
        corpus, embedder, config = tiny_setup
        hyper = Hyperparams(learning_rate=0.07, epochs=25, seed=4, dropout=0.0,
                            l2=1e-5)
        result = train(corpus, config, embedder, hyper)
        res = evaluate(corpus, result.model, embedder)
        if res.accuracy == 1.0:            # tiny corpus trains to perfection
            assert np.trace(res.confusion) == len(corpus)

    def test_constant_prediction_matches_class_rate(self):
        # zero parameters -> uniform probabilities -> argmax picks class 0
        sentences = [Sentence(str(i), ("x", "t"), 1, 2, "FOOD",
                              ("negative", "negative", "positive", "neutral")[i % 4])
                     for i in range(8)]
        corpus = Corpus(sentences)
        embedder = toy_embedder(dim=4, seed=17)
        model = LcrRotModel(ModelConfig(embed_dim=4, hidden_dim=2, hops=1))
        res = evaluate(corpus, model, embedder)
        assert res.accuracy == pytest.approx(0.5)    # negative share
        assert np.all(res.confusion[:, 1:] == 0)

    def test_confusion_rows_sum_to_gold_counts(self, tiny_setup):
        corpus, embedder, config = tiny_setup
        model = LcrRotModel(config)
        init_uniform(model.params, 0.3, seed=9)
        res = evaluate(corpus, model, embedder)
        gold_counts = np.zeros(3, dtype=int)
        for s in corpus:
            gold_counts[label_to_index(s.polarity)] += 1
        assert np.array_equal(res.confusion.sum(axis=1), gold_counts)
        assert res.confusion.sum() == len(corpus)


class TestHyperparams:
    def test_range_validation(self):
        with pytest.raises(ConfigError):
            Hyperparams(learning_rate=-0.1)
        with pytest.raises(ConfigError):
            Hyperparams(momentum=1.0)
        with pytest.raises(ConfigError):
            Hyperparams(l2=-1e-9)
        with pytest.raises(ConfigError):
            Hyperparams(dropout=1.0)
        with pytest.raises(ConfigError):
            Hyperparams(batch_size=0)

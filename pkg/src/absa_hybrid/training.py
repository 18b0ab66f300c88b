"""Loss, initializer, SGD-with-momentum, the epoch loop, and evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics as nm
from .dataset import Corpus, label_to_index
from .errors import ConfigError, ContractError, DivergenceError, EmptyCorpusError
from .model import LcrRotModel, ModelConfig
from .numerics import Parameter, Tape, Tensor, backward

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.05
    momentum: float = 0.9
    l2: float = 0.0001
    dropout: float = 0.1
    epochs: int = 20
    seed: int = 0
    batch_size: int = 1
    init_bound: float = 0.01

    def __post_init__(self):
        # zero is allowed as the degenerate no-op step size
        if self.learning_rate < 0.0:
            raise ConfigError(f"learning rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.l2 < 0.0:
            raise ConfigError(f"L2 coefficient must be >= 0, got {self.l2}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch size >= 1")

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "momentum": self.momentum,
                "l2": self.l2, "dropout": self.dropout, "epochs": self.epochs,
                "seed": self.seed, "batch_size": self.batch_size,
                "init_bound": self.init_bound}


def loss(probs: Tensor, gold: int, params, l2: float) -> Tensor:
    """Cross-entropy against the gold class plus an L2 penalty on weight
    matrices (biases excluded).

    A gold probability below 1e-12 is clamped (with a warning) so the loss
    never goes non-finite; the clamp kills the gradient for that entry.
    """
    if probs.values.ndim != 1:
        raise ContractError(f"probs must be a vector, got shape {probs.values.shape}")
    p = nm.pick(probs, gold)
    if float(p.values) < PROB_FLOOR:
        logger.warning("gold-class probability %.3e clamped to %.0e",
                       float(p.values), PROB_FLOOR)
        p = nm.clip_min(p, PROB_FLOOR)
    out = nm.scale(nm.log(p), -1.0)
    if l2 > 0.0:
        tape = probs.tape
        reg = None
        for param in params:
            if not (param.trainable and param.weight):
                continue
            node = tape.watch(param) if tape is not None else Tensor(param.value)
            sq = nm.sumsq(node)
            reg = sq if reg is None else nm.add(reg, sq)
        if reg is not None:
            out = nm.add(out, nm.scale(reg, l2))
    return out


def init_uniform(params, bound: float, seed) -> None:
    """Fill every trainable parameter i.i.d. uniform on [-bound, bound].

    Draws follow registration order, so a seed pins the whole initialization.
    """
    if bound <= 0.0:
        raise ConfigError(f"init bound must be > 0, got {bound}")
    rng = np.random.default_rng(seed)
    for p in params:
        if p.trainable:
            p.value[...] = rng.uniform(-bound, bound, p.value.shape)
            p.reset_grad()


@dataclass
class OptimizerState:
    """Per-parameter velocity tensors, keyed by parameter name."""

    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params) -> "OptimizerState":
        return cls({p.name: np.zeros_like(p.value) for p in params if p.trainable})


def sgd_momentum_step(params, state: OptimizerState, lr: float, momentum: float) -> None:
    """v <- momentum * v - lr * grad;  value <- value + v;  grads reset."""
    for p in params:
        if not p.trainable:
            continue
        v = state.velocity[p.name]
        v *= momentum
        v -= lr * p.grad
        p.value += v
        p.reset_grad()


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray    # rows gold, columns predicted
    size: int


def evaluate(corpus: Corpus, model: LcrRotModel, embedder) -> EvalResult:
    """Argmax accuracy plus the full gold-by-predicted confusion matrix."""
    if len(corpus) == 0:
        raise EmptyCorpusError("evaluate on an empty corpus")
    classes = model.config.classes
    confusion = np.zeros((classes, classes), dtype=np.int64)
    for sentence in corpus:
        pred, _ = model.predict(sentence, embedder)
        confusion[label_to_index(sentence.polarity), pred] += 1
    accuracy = float(np.trace(confusion)) / len(corpus)
    return EvalResult(accuracy, confusion, len(corpus))


@dataclass
class TrainResult:
    model: LcrRotModel
    embedder: object
    state: OptimizerState
    trace: list[dict]

    @property
    def all_params(self) -> list[Parameter]:
        return list(self.model.params) + list(self.embedder.parameters())


def train(corpus: Corpus, config: ModelConfig, embedder, hyper: Hyperparams,
          model: LcrRotModel | None = None,
          state: OptimizerState | None = None,
          epoch_offset: int = 0) -> TrainResult:
    """Seeded per-example SGD-momentum epochs with dropout active.

    When ``model``/``state`` are supplied, training continues from them and
    no re-initialization happens (``epoch_offset`` keeps trace numbering
    monotone across chunks).  The per-epoch trace records mean example loss
    and full-corpus training accuracy.
    """
    if len(corpus) == 0:
        raise EmptyCorpusError("train on an empty corpus")
    seq = np.random.SeedSequence(hyper.seed)
    init_ss, shuffle_ss, dropout_ss = seq.spawn(3)

    fresh = model is None
    if fresh:
        config = replace(config, dropout=hyper.dropout)
        model = LcrRotModel(config)
    all_params = list(model.params) + list(embedder.parameters())
    if fresh:
        init_uniform(all_params, hyper.init_bound, init_ss)
        combiner = getattr(embedder, "combiner", None)
        if hasattr(combiner, "reset_defaults"):
            combiner.reset_defaults()     # mixture starts uniform, scale at 1
    if state is None:
        state = OptimizerState.for_params(all_params)

    rng_shuffle = np.random.default_rng(shuffle_ss)
    rng_dropout = np.random.default_rng(dropout_ss)
    n = len(corpus)
    trace: list[dict] = []
    for epoch in range(1, hyper.epochs + 1):
        order = rng_shuffle.permutation(n)
        total_loss = 0.0
        for pos, idx in enumerate(order):
            sentence = corpus.sentences[idx]
            tape = Tape()
            probs = model.forward(sentence, embedder, tape, rng_dropout, training=True)
            ell = loss(probs, label_to_index(sentence.polarity), all_params, hyper.l2)
            value = ell.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, example {idx}",
                    epoch=epoch, example=int(idx))
            backward(tape, ell)
            if (pos + 1) % hyper.batch_size == 0 or pos + 1 == n:
                sgd_momentum_step(all_params, state, hyper.learning_rate, hyper.momentum)
            total_loss += value
        acc = evaluate(corpus, model, embedder).accuracy
        trace.append({"epoch": epoch_offset + epoch,
                      "loss": total_loss / n, "train_acc": acc})
    return TrainResult(model, embedder, state, trace)

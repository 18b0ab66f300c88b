"""Multi-hop rotatory-attention classifier over (left, target, right).

Three bi-LSTMs encode the left context, the target span, and the right
context.  A rotatory attention mechanism then alternates for a configurable
number of hops:

* step 1: the target representation queries each context, producing
  attention-pooled target2context vectors (``r_left``, ``r_right``);
* step 2: those context vectors query the target, producing context2target
  vectors (``r_target_left``, ``r_target_right``).

The first hop queries the contexts with the mean-pooled target; later hops
reuse the previous hop's context2target vectors as queries.  An optional
hierarchical attention layer rescales the four pooled vectors by a second
softmax, either jointly (one group of four) or per pair (contexts, targets),
and either once after the final hop or inside every hop:

* method 1: one group, applied after the final hop;
* method 2: one group, applied in every hop (rescaled vectors seed the next
  hop's queries);
* method 3: per pair, applied after the final hop;
* method 4: per pair, applied in every hop.

The four (possibly rescaled) vectors are concatenated and fed to an affine
head with a softmax over the three polarity classes.

An empty context contributes a zero vector for its target2context result;
the corresponding context2target vector is still computed with the zero
query (all target positions then score equally).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .dataset import Sentence, split_around_target
from .errors import ConfigError, ContractError
from .numerics import ParameterSet, Tape, Tensor

LSTM_PARTS = ("left", "target", "right")
LSTM_GATES = ("i", "f", "o", "c")
ROT_HEADS = ("left", "right", "target_left", "target_right")
HIER_GROUPS = ("all", "context", "target")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture sizes and switches.

    ``hidden_dim`` is the size of one LSTM direction, so hidden states and
    pooled vectors have dimension ``2 * hidden_dim`` and the head consumes
    ``8 * hidden_dim`` values.
    """

    embed_dim: int
    hidden_dim: int
    hops: int = 3
    method: int = 0
    classes: int = 3
    dropout: float = 0.0

    def __post_init__(self):
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("embed_dim and hidden_dim must be >= 1")
        if self.hops < 1:
            raise ConfigError(f"hop count must be >= 1, got {self.hops}")
        if self.method not in (0, 1, 2, 3, 4):
            raise ConfigError(f"hierarchy method must be 0..4, got {self.method}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return {"embed_dim": self.embed_dim, "hidden_dim": self.hidden_dim,
                "hops": self.hops, "method": self.method, "classes": self.classes,
                "dropout": self.dropout}

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


def build_params(config: ModelConfig) -> ParameterSet:
    """Allocate every learnable tensor, zero-filled, under canonical names.

    All hierarchical groups are allocated regardless of method so that
    checkpoints stay structurally identical across methods.
    """
    d, d_e = config.hidden_dim, config.embed_dim
    params = ParameterSet()
    for part in LSTM_PARTS:
        for direction in ("fwd", "bwd"):
            for gate in LSTM_GATES:
                prefix = f"lstm.{part}.{direction}.{gate}"
                params.add(f"{prefix}.wx", (d, d_e))
                params.add(f"{prefix}.wh", (d, d))
                params.add(f"{prefix}.b", (d,))
    for head in ROT_HEADS:
        params.add(f"rot.{head}.w", (2 * d, 2 * d))
        params.add(f"rot.{head}.b", ())
    for group in HIER_GROUPS:
        params.add(f"hier.{group}.w", (2 * d,), weight=True)
        params.add(f"hier.{group}.b", ())
    params.add("head.w", (config.classes, 8 * d))
    params.add("head.b", (config.classes,))
    return params


def _node(tape: Tape | None, param) -> Tensor:
    return tape.watch(param) if tape is not None else Tensor(param.value)


def _nodes(tape: Tape | None, params: ParameterSet) -> dict[str, Tensor]:
    return {p.name: _node(tape, p) for p in params}


# ---------------------------------------------------------------------------
# encoder


def _lstm_direction(xs: list[Tensor], nodes: dict[str, Tensor], prefix: str,
                    d: int) -> list[Tensor]:
    """One LSTM direction over ``xs``; returns a hidden state per input."""
    gates = {g: (nodes[f"{prefix}.{g}.wx"], nodes[f"{prefix}.{g}.wh"],
                 nodes[f"{prefix}.{g}.b"]) for g in LSTM_GATES}
    h = Tensor(np.zeros(d))
    c = Tensor(np.zeros(d))
    out = []
    for x in xs:
        pre = {}
        for g, (wx, wh, b) in gates.items():
            pre[g] = nm.add(nm.add(nm.matvec(wx, x), nm.matvec(wh, h)), b)
        i = nm.sigmoid_map(pre["i"])
        f = nm.sigmoid_map(pre["f"])
        o = nm.sigmoid_map(pre["o"])
        cand = nm.tanh_map(pre["c"])
        c = nm.add(nm.mul(f, c), nm.mul(i, cand))
        h = nm.mul(o, nm.tanh_map(c))
        out.append(h)
    return out


def encode(embedded: tuple[list[Tensor], list[Tensor], list[Tensor]],
           nodes: dict[str, Tensor], config: ModelConfig,
           rng: np.random.Generator | None = None,
           training: bool = False) -> tuple[list[Tensor], ...]:
    """Run the three bi-LSTMs; hidden states are direction-concatenated
    (length ``2 * hidden_dim``) and dropped out in training mode."""
    d = config.hidden_dim
    sequences = []
    for part, xs in zip(LSTM_PARTS, embedded):
        if not xs:
            sequences.append([])
            continue
        fwd = _lstm_direction(xs, nodes, f"lstm.{part}.fwd", d)
        bwd = _lstm_direction(list(reversed(xs)), nodes, f"lstm.{part}.bwd", d)
        bwd.reverse()
        hidden = []
        for hf, hb in zip(fwd, bwd):
            h = nm.concat([hf, hb])
            if training and config.dropout > 0.0:
                h = nm.dropout(h, config.dropout, rng, training)
            hidden.append(h)
        sequences.append(hidden)
    return tuple(sequences)


# ---------------------------------------------------------------------------
# attention


def attend(hidden: list[Tensor], query: Tensor, w: Tensor, b: Tensor
           ) -> tuple[Tensor, Tensor]:
    """Score each hidden state against the query and pool.

    ``f_i = tanh(h_i . (W q) + b)``, scores are the softmax over the ``f_i``,
    and the pooled vector is the score-weighted sum of hidden states.
    Returns ``(scores, pooled)``.
    """
    if not hidden:
        raise ContractError("attend over an empty sequence; caller must handle")
    wq = nm.matvec(w, query)
    f = [nm.tanh_map(nm.add(nm.dot(h, wq), b)) for h in hidden]
    scores = nm.softmax(nm.stack(f))
    pooled = nm.smul(nm.pick(scores, 0), hidden[0])
    for i in range(1, len(hidden)):
        pooled = nm.add(pooled, nm.smul(nm.pick(scores, i), hidden[i]))
    return scores, pooled


@dataclass
class HopResult:
    """Pooled vectors of one rotatory hop plus their attention scores.

    Score entries are ``None`` for an empty context.
    """

    vectors: tuple[Tensor, Tensor, Tensor, Tensor]
    scores: dict[str, Tensor | None] = field(default_factory=dict)


def rotatory_hop(hiddens: tuple[list[Tensor], list[Tensor], list[Tensor]],
                 queries: tuple[Tensor, Tensor],
                 nodes: dict[str, Tensor]) -> HopResult:
    """One rotatory iteration: contexts attended by the target queries, then
    the target attended by each pooled context vector."""
    left, target, right = hiddens
    if not target:
        raise ContractError("rotatory_hop needs a nonempty target")
    q_left, q_right = queries
    two_d = target[0].values.shape[0]

    if left:
        s_left, r_left = attend(left, q_left, nodes["rot.left.w"], nodes["rot.left.b"])
    else:
        s_left, r_left = None, Tensor(np.zeros(two_d))
    if right:
        s_right, r_right = attend(right, q_right, nodes["rot.right.w"], nodes["rot.right.b"])
    else:
        s_right, r_right = None, Tensor(np.zeros(two_d))

    s_tl, r_tl = attend(target, r_left, nodes["rot.target_left.w"],
                        nodes["rot.target_left.b"])
    s_tr, r_tr = attend(target, r_right, nodes["rot.target_right.w"],
                        nodes["rot.target_right.b"])
    return HopResult(
        vectors=(r_left, r_right, r_tl, r_tr),
        scores={"left": s_left, "right": s_right,
                "target_left": s_tl, "target_right": s_tr},
    )


def hierarchical_rescale(vectors: tuple[Tensor, ...], method: int,
                         nodes: dict[str, Tensor]
                         ) -> tuple[tuple[Tensor, ...], dict[str, Tensor] | None]:
    """Rescale the four pooled vectors by a second-level attention.

    Methods 1 and 2 score all four vectors in one softmax group; methods 3
    and 4 score the context pair and the target pair separately.  Method 0
    passes the vectors through untouched.  Returns the rescaled vectors and
    the group scores (``None`` for method 0).
    """
    if len(vectors) != 4:
        raise ContractError(f"expected the four pooled vectors, got {len(vectors)}")
    if method == 0:
        return vectors, None
    if method in (1, 2):
        alphas = _group_scores(vectors, nodes["hier.all.w"], nodes["hier.all.b"])
        out = tuple(nm.smul(nm.pick(alphas, i), v) for i, v in enumerate(vectors))
        return out, {"all": alphas}
    if method in (3, 4):
        a_ctx = _group_scores(vectors[:2], nodes["hier.context.w"], nodes["hier.context.b"])
        a_tgt = _group_scores(vectors[2:], nodes["hier.target.w"], nodes["hier.target.b"])
        out = (nm.smul(nm.pick(a_ctx, 0), vectors[0]),
               nm.smul(nm.pick(a_ctx, 1), vectors[1]),
               nm.smul(nm.pick(a_tgt, 0), vectors[2]),
               nm.smul(nm.pick(a_tgt, 1), vectors[3]))
        return out, {"context": a_ctx, "target": a_tgt}
    raise ContractError(f"unknown hierarchy method {method}")


def _group_scores(vectors, w: Tensor, b: Tensor) -> Tensor:
    f = [nm.tanh_map(nm.add(nm.dot(v, w), b)) for v in vectors]
    return nm.softmax(nm.stack(f))


def multi_hop(hiddens: tuple[list[Tensor], list[Tensor], list[Tensor]],
              config: ModelConfig, nodes: dict[str, Tensor]
              ) -> tuple[tuple[Tensor, ...], list[dict]]:
    """Run ``config.hops`` rotatory iterations (with in-loop rescaling for
    methods 2 and 4, one final rescale for methods 1 and 3).

    Returns the four vectors that feed the head and a per-hop trace of raw
    attention scores and hierarchical group scores.
    """
    _, target, _ = hiddens
    q_left = q_right = nm.mean_pool(target)
    trace: list[dict] = []
    vectors: tuple[Tensor, ...] = ()
    for hop in range(config.hops):
        result = rotatory_hop(hiddens, (q_left, q_right), nodes)
        vectors = result.vectors
        hier_alphas = None
        if config.method in (2, 4):
            vectors, hier_alphas = hierarchical_rescale(vectors, config.method, nodes)
        trace.append({"hop": hop + 1, "scores": result.scores, "hier": hier_alphas})
        q_left, q_right = vectors[2], vectors[3]
    if config.method in (1, 3):
        vectors, hier_alphas = hierarchical_rescale(vectors, config.method, nodes)
        trace.append({"hop": None, "scores": None, "hier": hier_alphas})
    return vectors, trace


# ---------------------------------------------------------------------------
# full model


class LcrRotModel:
    """Parameter container plus the end-to-end forward pass."""

    def __init__(self, config: ModelConfig, params: ParameterSet | None = None):
        self.config = config
        self.params = params if params is not None else build_params(config)

    def forward_embedded(self, embedded, tape: Tape | None = None,
                         rng: np.random.Generator | None = None,
                         training: bool = False,
                         want_trace: bool = False):
        """Forward from pre-embedded (left, target, right) vector lists.

        Returns class probabilities, or ``(probabilities, trace)`` when
        ``want_trace`` is set.
        """
        if training and self.config.dropout > 0.0 and rng is None:
            raise ContractError("training with dropout needs an rng")
        nodes = _nodes(tape, self.params)
        hiddens = encode(embedded, nodes, self.config, rng, training)
        vectors, trace = multi_hop(hiddens, self.config, nodes)
        joined = nm.concat(list(vectors))
        if training and self.config.dropout > 0.0:
            joined = nm.dropout(joined, self.config.dropout, rng, training)
        logits = nm.add(nm.matvec(nodes["head.w"], joined), nodes["head.b"])
        probs = nm.softmax(logits)
        if want_trace:
            return probs, trace
        return probs

    def embed_split(self, sentence: Sentence, embedder, tape: Tape | None = None):
        if embedder.dim != self.config.embed_dim:
            raise ConfigError(
                f"embedder dimension {embedder.dim} does not match model "
                f"embed_dim {self.config.embed_dim}")
        vectors = embedder.vectors(sentence, tape)
        s, e = sentence.target_span
        return (vectors[:s], vectors[s:e], vectors[e:])

    def forward(self, sentence: Sentence, embedder, tape: Tape | None = None,
                rng: np.random.Generator | None = None, training: bool = False,
                want_trace: bool = False):
        embedded = self.embed_split(sentence, embedder, tape)
        return self.forward_embedded(embedded, tape, rng, training, want_trace)

    def predict(self, sentence: Sentence, embedder) -> tuple[int, np.ndarray]:
        """Deterministic inference; argmax ties break toward the lowest index."""
        probs = self.forward(sentence, embedder).values
        return int(np.argmax(probs)), probs

    def attention_trace(self, sentence: Sentence, embedder) -> dict:
        """JSON-ready attention record for one sentence (inference mode)."""
        probs, trace = self.forward(sentence, embedder, want_trace=True)
        split = split_around_target(sentence)
        record = {
            "sid": sentence.sid,
            "target_span": list(sentence.target_span),
            "tokens": {"left": list(split.left), "target": list(split.target),
                       "right": list(split.right)},
            "method": self.config.method,
            "probabilities": [float(p) for p in probs.values],
            "hops": [],
        }
        for entry in trace:
            if entry["scores"] is None:      # final rescale for methods 1/3
                record["final_hier"] = _hier_to_json(entry["hier"])
                continue
            hop = {"hop": entry["hop"]}
            for side in ("left", "right", "target_left", "target_right"):
                s = entry["scores"][side]
                hop[side] = [] if s is None else [float(x) for x in s.values]
            hop["hier"] = _hier_to_json(entry["hier"])
            record["hops"].append(hop)
        return record


def _hier_to_json(alphas: dict[str, Tensor] | None):
    if alphas is None:
        return None
    return {group: [float(x) for x in t.values] for group, t in alphas.items()}

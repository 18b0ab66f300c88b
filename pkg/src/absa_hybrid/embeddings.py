"""Embedding stores, contextual layer combiners, and a toy GloVe trainer.

Two store flavours exist.  Non-contextual stores map a token to one vector
(text format: ``token v1 ... vd`` per line).  Contextual stores map a token
occurrence ``(sid, token_index)`` to one vector per model layer (JSON-lines:
``{"sid": ..., "tok": ..., "layers": [[...], ...]}``; a leading header object
without a ``sid`` field is allowed and kept as metadata).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .errors import ConfigError, DivergenceError, ParseError, ValidationError
from .numerics import Parameter, Tensor

OOV_POLICIES = ("zero", "hash")


# ---------------------------------------------------------------------------
# non-contextual


class NonContextualStore:
    """Token -> vector map with a fixed dimension and an OOV policy."""

    def __init__(self, dim: int, vectors: dict[str, np.ndarray], oov_policy: str = "zero"):
        if oov_policy not in OOV_POLICIES:
            raise ConfigError(f"unknown OOV policy {oov_policy!r}")
        self.dim = dim
        self.oov_policy = oov_policy
        self._vectors = vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def lookup(self, token: str) -> np.ndarray:
        """Stored vector, or the OOV policy result (all zeros, or a uniform
        vector in [-0.1, 0.1] seeded by the token's hash)."""
        vec = self._vectors.get(token)
        if vec is not None:
            return vec
        if self.oov_policy == "zero":
            return np.zeros(self.dim)
        seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")
        return np.random.default_rng(seed).uniform(-0.1, 0.1, self.dim)


def load_noncontextual(path, expected_dim: int | None = None,
                       oov_policy: str = "zero") -> NonContextualStore:
    """Parse a whitespace-separated text embedding file.

    The dimension is inferred from the first row and every later row must
    match it; ``expected_dim`` adds an up-front check against the caller's
    configuration.
    """
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ParseError(f"expected 'token v1 ... vd', got {line!r}", line_no)
            token = parts[0]
            try:
                values = np.array([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise ParseError(f"non-numeric vector entry: {exc}", line_no) from exc
            if dim is None:
                dim = values.shape[0]
                if expected_dim is not None and dim != expected_dim:
                    raise ConfigError(
                        f"store dimension {dim} does not match expected {expected_dim}")
            elif values.shape[0] != dim:
                raise ParseError(
                    f"row has {values.shape[0]} values, store dimension is {dim}", line_no)
            vectors[token] = values
    if dim is None:
        raise ParseError(f"empty embedding file {path}")
    return NonContextualStore(dim, vectors, oov_policy)


def save_noncontextual(store: NonContextualStore, path) -> None:
    """Inverse of :func:`load_noncontextual`; float repr round-trips exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for token, vec in store._vectors.items():
            fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


# ---------------------------------------------------------------------------
# contextual


class ContextualStore:
    """(sid, token_index) -> ordered per-layer vectors, uniform count and dim."""

    def __init__(self, layer_count: int, dim: int,
                 occurrences: dict[tuple[str, int], list[np.ndarray]],
                 metadata: dict | None = None):
        self.layer_count = layer_count
        self.dim = dim
        self._occ = occurrences
        self.metadata = metadata or {}

    def __len__(self) -> int:
        return len(self._occ)

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self._occ

    def layers(self, sid: str, token_index: int) -> list[np.ndarray]:
        key = (sid, token_index)
        if key not in self._occ:
            raise ValidationError(f"no contextual vectors for sid={sid!r} token {token_index}")
        return self._occ[key]

    def validate_against(self, corpus) -> None:
        """Check every corpus token has vectors and no index overshoots."""
        token_counts: dict[str, int] = {}
        for s in corpus:
            token_counts[s.sid] = len(s.tokens)
        for sid, count in token_counts.items():
            for idx in range(count):
                if (sid, idx) not in self._occ:
                    raise ValidationError(f"missing vectors for sid={sid!r} token {idx}")
        for (sid, idx) in self._occ:
            if sid in token_counts and idx >= token_counts[sid]:
                raise ValidationError(
                    f"token index {idx} out of range for sid={sid!r} "
                    f"({token_counts[sid]} tokens)")


def load_contextual(path) -> ContextualStore:
    occurrences: dict[tuple[str, int], list[np.ndarray]] = {}
    metadata: dict = {}
    layer_count: int | None = None
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line_no) from exc
            if "sid" not in obj:
                if occurrences or metadata:
                    raise ParseError("header object allowed only as the first line", line_no)
                metadata = obj
                continue
            try:
                sid = str(obj["sid"])
                tok = int(obj["tok"])
                layers = [np.array(layer, dtype=np.float64) for layer in obj["layers"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"missing or malformed field: {exc}", line_no) from exc
            if not layers or any(layer.ndim != 1 for layer in layers):
                raise ParseError("layers must be a nonempty list of vectors", line_no)
            if layer_count is None:
                layer_count, dim = len(layers), layers[0].shape[0]
            if len(layers) != layer_count:
                raise ParseError(
                    f"occurrence has {len(layers)} layers, store has {layer_count}", line_no)
            if any(layer.shape[0] != dim for layer in layers):
                raise ParseError(f"layer vector length differs from {dim}", line_no)
            key = (sid, tok)
            if key in occurrences:
                raise ParseError(f"duplicate occurrence {key}", line_no)
            occurrences[key] = layers
    if layer_count is None:
        raise ParseError(f"no occurrence records in {path}")
    return ContextualStore(layer_count, dim, occurrences, metadata)


def save_contextual(store: ContextualStore, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if store.metadata:
            fh.write(json.dumps(store.metadata, sort_keys=True) + "\n")
        for (sid, tok), layers in store._occ.items():
            rec = {"sid": sid, "tok": tok,
                   "layers": [[float(v) for v in layer] for layer in layers]}
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# layer combiners


@dataclass
class ElmoWeights:
    """Fixed per-layer mixing weights plus a task scale.

    Weights are normalized by their sum at combine time, so passing an
    already-normalized distribution (including a one-hot) uses it verbatim.
    """

    s: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        if self.s.ndim != 1 or self.s.shape[0] == 0:
            raise ConfigError("layer weights must be a nonempty vector")
        if np.any(self.s < 0.0):
            raise ConfigError("layer weights must be nonnegative")
        if self.s.sum() <= 0.0:
            raise ConfigError("layer weights must not all be zero")

    def normalized(self) -> np.ndarray:
        return self.s / self.s.sum()


def elmo_combine(layers: list[Tensor], weights: ElmoWeights) -> Tensor:
    """Weighted sum over layers, scaled: gamma * sum_j s_j * h_j."""
    s = weights.normalized()
    if len(layers) != s.shape[0]:
        raise ConfigError(f"{len(layers)} layers but {s.shape[0]} layer weights")
    out = nm.scale(layers[0], float(s[0]) * weights.gamma)
    for j in range(1, len(layers)):
        out = nm.add(out, nm.scale(layers[j], float(s[j]) * weights.gamma))
    return out


def bert_combine(layers: list[Tensor]) -> Tensor:
    """Elementwise sum of the final four layers; earlier layers are ignored."""
    if len(layers) < 4:
        raise ConfigError(f"need at least 4 layers to combine, got {len(layers)}")
    out = layers[-4]
    for layer in layers[-3:]:
        out = nm.add(out, layer)
    return out


class ElmoCombiner:
    """Layer mixture whose weights and scale train with the downstream model.

    Raw weights go through a softmax (keeping the mixture normalized during
    training); the scale starts at 1 and the mixture starts uniform.
    """

    def __init__(self, layer_count: int):
        if layer_count < 1:
            raise ConfigError("need at least one layer")
        self.layer_count = layer_count
        self.raw = Parameter("elmo.s_raw", np.zeros(layer_count), weight=False)
        self.gamma = Parameter("elmo.gamma", np.asarray(1.0), weight=False)

    def parameters(self) -> list[Parameter]:
        return [self.raw, self.gamma]

    def reset_defaults(self) -> None:
        self.raw.value[...] = 0.0
        self.gamma.value[...] = 1.0

    def weights(self) -> ElmoWeights:
        """Snapshot of the current mixture as fixed weights."""
        e = np.exp(self.raw.value - self.raw.value.max())
        return ElmoWeights(e / e.sum(), float(self.gamma.value))

    def combine(self, layers: list[Tensor], tape: nm.Tape | None = None) -> Tensor:
        if len(layers) != self.layer_count:
            raise ConfigError(f"{len(layers)} layers but combiner expects {self.layer_count}")
        raw = tape.watch(self.raw) if tape is not None else Tensor(self.raw.value)
        gamma = tape.watch(self.gamma) if tape is not None else Tensor(self.gamma.value)
        s = nm.softmax(raw)
        out = nm.smul(nm.pick(s, 0), layers[0])
        for j in range(1, len(layers)):
            out = nm.add(out, nm.smul(nm.pick(s, j), layers[j]))
        return nm.smul(gamma, out)


# ---------------------------------------------------------------------------
# embedders (what the encoder consumes)


class NonContextualEmbedder:
    """Per-token constant vectors from a non-contextual store."""

    def __init__(self, store: NonContextualStore):
        self.store = store
        self.dim = store.dim

    def vectors(self, sentence, tape: nm.Tape | None = None) -> list[Tensor]:
        return [Tensor(self.store.lookup(tok)) for tok in sentence.tokens]

    def parameters(self) -> list[Parameter]:
        return []


class ContextualEmbedder:
    """Per-occurrence vectors from a contextual store, combined across layers.

    ``combiner`` is ``"bert"`` (fixed last-four sum), an :class:`ElmoWeights`
    (fixed mixture), or an :class:`ElmoCombiner` (trainable mixture).
    """

    def __init__(self, store: ContextualStore, combiner="bert"):
        self.store = store
        self.combiner = combiner
        if combiner == "bert":
            if store.layer_count < 4:
                raise ConfigError(
                    f"bert combiner needs >= 4 layers, store has {store.layer_count}")
        elif isinstance(combiner, ElmoWeights):
            if combiner.s.shape[0] != store.layer_count:
                raise ConfigError("layer weights do not match store layer count")
        elif isinstance(combiner, ElmoCombiner):
            if combiner.layer_count != store.layer_count:
                raise ConfigError("combiner layer count does not match store")
        else:
            raise ConfigError(f"unknown combiner {combiner!r}")
        self.dim = store.dim

    def vectors(self, sentence, tape: nm.Tape | None = None) -> list[Tensor]:
        out = []
        for idx in range(len(sentence.tokens)):
            layers = [Tensor(v) for v in self.store.layers(sentence.sid, idx)]
            if self.combiner == "bert":
                out.append(bert_combine(layers))
            elif isinstance(self.combiner, ElmoWeights):
                out.append(elmo_combine(layers, self.combiner))
            else:
                out.append(self.combiner.combine(layers, tape))
        return out

    def parameters(self) -> list[Parameter]:
        if isinstance(self.combiner, ElmoCombiner):
            return self.combiner.parameters()
        return []


# ---------------------------------------------------------------------------
# toy GloVe trainer


@dataclass
class GloveWeighting:
    """Capped power-law co-occurrence weight: min(1, (x / x_max) ** alpha).

    Continuous and non-decreasing on [0, inf), equal to 1 from x_max on.
    """

    x_max: float = 100.0
    alpha: float = 0.75

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            return np.minimum(1.0, np.where(x > 0.0, x / self.x_max, 0.0) ** self.alpha)


@dataclass
class CooccurrenceTable:
    """Vocabulary plus a symmetric count matrix built over a token window."""

    vocab: list[str]
    counts: np.ndarray
    window: int
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        if self.counts.shape != (len(self.vocab), len(self.vocab)):
            raise ConfigError(
                f"count matrix shape {self.counts.shape} does not match vocabulary "
                f"size {len(self.vocab)}")
        if np.any(self.counts < 0.0):
            raise ConfigError("co-occurrence counts must be nonnegative")


def build_cooccurrence(corpus: list[list[str]], window: int) -> CooccurrenceTable:
    """Count, symmetrically, every ordered token pair within the window."""
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    vocab: list[str] = []
    index: dict[str, int] = {}
    for tokens in corpus:
        for tok in tokens:
            if tok not in index:
                index[tok] = len(vocab)
                vocab.append(tok)
    counts = np.zeros((len(vocab), len(vocab)))
    for tokens in corpus:
        ids = [index[t] for t in tokens]
        for i in range(len(ids)):
            for j in range(i + 1, min(i + window + 1, len(ids))):
                counts[ids[i], ids[j]] += 1.0
                counts[ids[j], ids[i]] += 1.0
    return CooccurrenceTable(vocab, counts, window)


@dataclass
class GloveModel:
    """One vector and one bias per vocabulary word."""

    vocab: list[str]
    vectors: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        if self.vectors.shape[0] != len(self.vocab) or self.biases.shape[0] != len(self.vocab):
            raise ConfigError("model rows do not match vocabulary size")


def glove_cost(model: GloveModel, table: CooccurrenceTable,
               weighting: GloveWeighting = GloveWeighting()) -> float:
    """Weighted squared residual of dot-plus-biases against log counts.

    Zero-count pairs contribute nothing.
    """
    if model.vocab != table.vocab:
        raise ConfigError("model and table vocabularies differ")
    mask = table.counts > 0.0
    if not mask.any():
        return 0.0
    w, b = model.vectors, model.biases
    pred = w @ w.T + b[:, None] + b[None, :]
    resid = np.zeros_like(table.counts)
    resid[mask] = pred[mask] - np.log(table.counts[mask])
    f = weighting(table.counts)
    return float((f * resid * resid)[mask].sum())


def glove_train(table: CooccurrenceTable, dim: int, epochs: int, lr: float, seed: int,
                weighting: GloveWeighting = GloveWeighting()) -> tuple[GloveModel, list[float]]:
    """Full-batch gradient descent on the weighted least-squares cost.

    Returns the fitted model and the cost trace (initial cost first, final
    cost last, so the trace has ``epochs + 1`` entries).
    """
    if dim < 1:
        raise ConfigError(f"embedding dimension must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    v = len(table.vocab)
    w = rng.uniform(-0.5, 0.5, (v, dim)) / dim
    b = rng.uniform(-0.5, 0.5, v) / dim
    model = GloveModel(table.vocab, w, b)

    mask = table.counts > 0.0
    f = weighting(table.counts) * mask
    log_x = np.zeros_like(table.counts)
    log_x[mask] = np.log(table.counts[mask])

    trace = [glove_cost(model, table, weighting)]
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            pred = w @ w.T + b[:, None] + b[None, :]
            resid = (pred - log_x) * mask
            g = 2.0 * f * resid
            grad_w = g @ w + g.T @ w
            grad_b = g.sum(axis=1) + g.sum(axis=0)
            w -= lr * grad_w
            b -= lr * grad_b
            cost = glove_cost(model, table, weighting)
            if not np.isfinite(cost):
                raise DivergenceError(f"GloVe cost diverged at epoch {epoch}",
                                      epoch=epoch)
            trace.append(cost)
    return model, trace

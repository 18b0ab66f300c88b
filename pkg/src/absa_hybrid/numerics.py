"""Dense linear algebra with reverse-mode gradient accumulation.

Everything is double precision and rank <= 2: scalars are rank-0 arrays,
sequences are plain lists of rank-1 tensors.  A :class:`Tape` records every
primitive executed during a forward pass; replaying the records in reverse
order accumulates d(loss)/d(parameter) into each watched :class:`Parameter`.

The primitive set is intentionally small: exactly what bi-LSTM encoders,
attention pooling, and an affine classification head need.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, EmptyTargetError


class Tensor:
    """A graph node: float64 values plus a lazily allocated gradient slot.

    Tensors with ``tape=None`` are constants; gradient accumulation skips
    them entirely.
    """

    __slots__ = ("values", "tape", "_grad")

    def __init__(self, values, tape: "Tape | None" = None):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim > 2:
            raise DimensionError(f"rank-{v.ndim} tensor not supported (max rank is 2)")
        self.values = v
        self.tape = tape
        self._grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    def item(self) -> float:
        if self.values.ndim != 0:
            raise ContractError(f"item() on tensor of shape {self.values.shape}")
        return float(self.values)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape}, tape={'yes' if self.tape else 'no'})"


class Parameter:
    """A named, persistent leaf: value, matching gradient, trainable flag.

    ``weight`` marks parameters that count toward the L2 penalty (weight
    matrices; biases are excluded).
    """

    __slots__ = ("name", "value", "grad", "trainable", "weight")

    def __init__(self, name: str, value, trainable: bool = True, weight: bool | None = None):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        if self.value.ndim > 2:
            raise DimensionError(f"parameter {name}: rank-{self.value.ndim} not supported")
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable
        self.weight = (self.value.ndim >= 2) if weight is None else weight

    def reset_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class ParameterSet:
    """Ordered, name-addressed collection of parameters.

    Registration order is the canonical order for initialization and
    optimizer state, which keeps seeded runs reproducible.
    """

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, shape: tuple[int, ...], trainable: bool = True,
            weight: bool | None = None) -> Parameter:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        p = Parameter(name, np.zeros(shape), trainable=trainable, weight=weight)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def trainable(self) -> list[Parameter]:
        return [p for p in self._params.values() if p.trainable]

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.reset_grad()


class Tape:
    """Ordered record of executed primitives for one forward pass."""

    __slots__ = ("_ops", "_watched", "_watch_index", "_consumed")

    def __init__(self):
        self._ops: list = []
        self._watched: list[tuple[Parameter, Tensor]] = []
        self._watch_index: dict[int, Tensor] = {}
        self._consumed = False

    def watch(self, param: Parameter) -> Tensor:
        """Return the (single) graph node standing for ``param`` on this tape."""
        node = self._watch_index.get(id(param))
        if node is None:
            node = Tensor(param.value, tape=self)
            self._watch_index[id(param)] = node
            self._watched.append((param, node))
        return node


def _tape_of(*tensors: Tensor) -> Tape | None:
    for t in tensors:
        if t.tape is not None:
            return t.tape
    return None


def _accum(t: Tensor, g) -> None:
    if t.tape is None:
        return
    if t._grad is None:
        t._grad = np.array(g, dtype=np.float64)
    else:
        t._grad += g


def backward(tape: Tape, loss: Tensor) -> None:
    """Replay ``tape`` in reverse, filling every watched parameter's gradient."""
    if loss.values.ndim != 0:
        raise ContractError(f"loss must be scalar, got shape {loss.values.shape}")
    if loss.tape is not tape:
        raise ContractError("loss node does not belong to this tape")
    if tape._consumed:
        raise ContractError("tape already replayed")
    tape._consumed = True
    loss._grad = np.ones(())
    for op in reversed(tape._ops):
        op()
    for param, node in tape._watched:
        if param.trainable and node._grad is not None:
            param.grad += node._grad


# ---------------------------------------------------------------------------
# primitives


def matvec(m: Tensor, v: Tensor) -> Tensor:
    if m.values.ndim != 2 or v.values.ndim != 1 or m.values.shape[1] != v.values.shape[0]:
        raise DimensionError(
            f"matvec: shapes {m.values.shape} and {v.values.shape} do not agree")
    tape = _tape_of(m, v)
    out = Tensor(m.values @ v.values, tape)
    if tape is not None:
        mv, vv = m.values, v.values

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(m, np.outer(g, vv))
            _accum(v, mv.T @ g)

        tape._ops.append(bwd)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.values.shape != b.values.shape:
        raise DimensionError(f"add: shapes {a.values.shape} and {b.values.shape} differ")
    tape = _tape_of(a, b)
    out = Tensor(a.values + b.values, tape)
    if tape is not None:

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(a, g)
            _accum(b, g)

        tape._ops.append(bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.values.shape != b.values.shape:
        raise DimensionError(f"sub: shapes {a.values.shape} and {b.values.shape} differ")
    tape = _tape_of(a, b)
    out = Tensor(a.values - b.values, tape)
    if tape is not None:

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(a, g)
            _accum(b, -g)

        tape._ops.append(bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product of same-shape tensors."""
    if a.values.shape != b.values.shape:
        raise DimensionError(f"mul: shapes {a.values.shape} and {b.values.shape} differ")
    tape = _tape_of(a, b)
    out = Tensor(a.values * b.values, tape)
    if tape is not None:
        av, bv = a.values, b.values

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(a, g * bv)
            _accum(b, g * av)

        tape._ops.append(bwd)
    return out


def smul(s: Tensor, t: Tensor) -> Tensor:
    """Scalar node times tensor node."""
    if s.values.ndim != 0:
        raise DimensionError(f"smul: scaling factor must be scalar, got {s.values.shape}")
    tape = _tape_of(s, t)
    out = Tensor(s.values * t.values, tape)
    if tape is not None:
        sv, tv = s.values, t.values

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(t, g * sv)
            _accum(s, np.asarray((g * tv).sum()))

        tape._ops.append(bwd)
    return out


def scale(t: Tensor, c: float) -> Tensor:
    """Multiply by a plain (non-differentiated) constant."""
    tape = t.tape
    out = Tensor(t.values * c, tape)
    if tape is not None:

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(t, g * c)

        tape._ops.append(bwd)
    return out


def tanh_map(t: Tensor) -> Tensor:
    tape = t.tape
    out = Tensor(np.tanh(t.values), tape)
    if tape is not None:
        y = out.values

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(t, g * (1.0 - y * y))

        tape._ops.append(bwd)
    return out


def sigmoid_map(t: Tensor) -> Tensor:
    # 1/(1+exp(-x)) via tanh keeps the computation overflow-free
    tape = t.tape
    out = Tensor(0.5 * (1.0 + np.tanh(0.5 * t.values)), tape)
    if tape is not None:
        y = out.values

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(t, g * y * (1.0 - y))

        tape._ops.append(bwd)
    return out


def softmax(v: Tensor) -> Tensor:
    if v.values.ndim != 1 or v.values.shape[0] == 0:
        raise DimensionError(f"softmax needs a nonempty vector, got shape {v.values.shape}")
    tape = v.tape
    shifted = v.values - v.values.max()
    e = np.exp(shifted)
    out = Tensor(e / e.sum(), tape)
    if tape is not None:
        y = out.values

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(v, y * (g - float(g @ y)))

        tape._ops.append(bwd)
    return out


def mean_pool(rows: list[Tensor]) -> Tensor:
    if not rows:
        raise EmptyTargetError("mean_pool over an empty sequence")
    q = rows[0].values.shape
    for r in rows:
        if r.values.shape != q:
            raise DimensionError(f"mean_pool: mixed shapes {q} and {r.values.shape}")
    tape = _tape_of(*rows)
    n = len(rows)
    out = Tensor(sum(r.values for r in rows) / n, tape)
    if tape is not None:

        def bwd():
            g = out._grad
            if g is None:
                return
            share = g / n
            for r in rows:
                _accum(r, share)

        tape._ops.append(bwd)
    return out


def concat(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise DimensionError("concat of an empty sequence")
    for p in parts:
        if p.values.ndim != 1:
            raise DimensionError(f"concat expects vectors, got shape {p.values.shape}")
    tape = _tape_of(*parts)
    out = Tensor(np.concatenate([p.values for p in parts]), tape)
    if tape is not None:
        sizes = [p.values.shape[0] for p in parts]

        def bwd():
            g = out._grad
            if g is None:
                return
            off = 0
            for p, size in zip(parts, sizes):
                _accum(p, g[off:off + size])
                off += size

        tape._ops.append(bwd)
    return out


def stack(scalars: list[Tensor]) -> Tensor:
    """Assemble rank-0 tensors into a vector."""
    if not scalars:
        raise DimensionError("stack of an empty sequence")
    for s in scalars:
        if s.values.ndim != 0:
            raise DimensionError(f"stack expects scalars, got shape {s.values.shape}")
    tape = _tape_of(*scalars)
    out = Tensor(np.array([s.values for s in scalars]), tape)
    if tape is not None:

        def bwd():
            g = out._grad
            if g is None:
                return
            for i, s in enumerate(scalars):
                _accum(s, g[i])

        tape._ops.append(bwd)
    return out


def pick(v: Tensor, i: int) -> Tensor:
    """Select one entry of a vector as a scalar node."""
    if v.values.ndim != 1:
        raise DimensionError(f"pick expects a vector, got shape {v.values.shape}")
    if not 0 <= i < v.values.shape[0]:
        raise ContractError(f"pick index {i} out of range for length {v.values.shape[0]}")
    tape = v.tape
    out = Tensor(v.values[i], tape)
    if tape is not None:

        def bwd():
            g = out._grad
            if g is None:
                return
            full = np.zeros_like(v.values)
            full[i] = g
            _accum(v, full)

        tape._ops.append(bwd)
    return out


def dot(u: Tensor, v: Tensor) -> Tensor:
    if u.values.ndim != 1 or v.values.ndim != 1 or u.values.shape != v.values.shape:
        raise DimensionError(f"dot: shapes {u.values.shape} and {v.values.shape} do not agree")
    tape = _tape_of(u, v)
    out = Tensor(np.asarray(u.values @ v.values), tape)
    if tape is not None:
        uv, vv = u.values, v.values

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(u, g * vv)
            _accum(v, g * uv)

        tape._ops.append(bwd)
    return out


def log(t: Tensor) -> Tensor:
    tape = t.tape
    out = Tensor(np.log(t.values), tape)
    if tape is not None:
        tv = t.values

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(t, g / tv)

        tape._ops.append(bwd)
    return out


def clip_min(t: Tensor, floor: float) -> Tensor:
    """max(t, floor) elementwise; gradient passes through unclipped entries."""
    tape = t.tape
    out = Tensor(np.maximum(t.values, floor), tape)
    if tape is not None:
        mask = (t.values >= floor).astype(np.float64)

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(t, g * mask)

        tape._ops.append(bwd)
    return out


def sumsq(t: Tensor) -> Tensor:
    """Sum of squared entries, as a scalar node."""
    tape = t.tape
    out = Tensor(np.asarray((t.values * t.values).sum()), tape)
    if tape is not None:
        tv = t.values

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(t, 2.0 * g * tv)

        tape._ops.append(bwd)
    return out


def dropout(v: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: zero entries with probability ``rate`` and rescale
    survivors by 1/(1-rate) so inference is a plain identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return v
    mask = (rng.random(v.values.shape) >= rate) / (1.0 - rate)
    tape = v.tape
    out = Tensor(v.values * mask, tape)
    if tape is not None:

        def bwd():
            g = out._grad
            if g is None:
                return
            _accum(v, g * mask)

        tape._ops.append(bwd)
    return out


# ---------------------------------------------------------------------------
# verification


@dataclass
class GradCheckReport:
    """Per-parameter relative error between tape and central-difference grads."""

    per_param: dict[str, float]

    @property
    def max_relative_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0


def gradient_check(forward, params, step: float = 1e-5,
                   denom_floor: float = 1e-5) -> GradCheckReport:
    """Compare tape gradients against central finite differences.

    ``forward(tape)`` must rebuild the loss from scratch on every call and be
    deterministic (dropout disabled).  Passing ``tape=None`` must yield the
    plain forward value.  The relative error for a parameter is
    ``|g_tape - g_fd| / max(|g_tape| + |g_fd|, denom_floor)`` in the
    Euclidean norm.  The denominator floor keeps the metric meaningful for
    near-dead parameters (an attention bias can sit at ~1e-8, where the
    finite differences themselves carry ~1e-11 double-precision noise); with
    the floor, tiny gradients are still held to ~1e-9 absolute agreement at
    the usual 1e-4 tolerance.
    """
    params = list(params)
    for p in params:
        p.reset_grad()
    tape = Tape()
    loss = forward(tape)
    backward(tape, loss)
    tape_grads = {p.name: p.grad.copy() for p in params if p.trainable}

    report: dict[str, float] = {}
    for p in params:
        if not p.trainable:
            continue
        flat = p.value.reshape(-1)
        fd = np.zeros(flat.shape[0])
        for j in range(flat.shape[0]):
            orig = flat[j]
            flat[j] = orig + step
            f_plus = forward(None).item()
            flat[j] = orig - step
            f_minus = forward(None).item()
            flat[j] = orig
            fd[j] = (f_plus - f_minus) / (2.0 * step)
        g = tape_grads[p.name].reshape(-1)
        denom = max(float(np.linalg.norm(g) + np.linalg.norm(fd)), denom_floor)
        report[p.name] = float(np.linalg.norm(g - fd) / denom)
    return GradCheckReport(report)

"""Reverse-mode differentiation over numpy arrays.

Operations run eagerly. While a :class:`Tape` is active they also record a
backward closure; ``Tape.backward`` then replays the closures newest-first,
which is a reverse topological order of the graph, each exactly once. With no
active tape the same functions are plain inference code.

Only the layers the tagger needs are provided: affine maps, embedding
lookups, concatenation, a valid 1-D convolution with max-pool over time, a
fused LSTM step, dropout, log-softmax and a masked negative log-likelihood,
plus Adam with global-norm clipping and a finite-difference gradient checker.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from ner_forge.config import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPSILON,
    CLIP_NORM,
    GRADCHECK_ATOL,
    GRADCHECK_SAMPLES,
    GRADCHECK_STEP,
    GRADCHECK_TOLERANCE,
)
from ner_forge.errors import GradCheckError, ShapeError

log = logging.getLogger("ner_forge")


class Value:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def grad_buffer(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def accumulate(self, g) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype).reshape(self.data.shape)
        else:
            self.grad += g

    def gradient(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Value(shape={self.shape}, dtype={self.dtype})"


class Parameter(Value):
    __slots__ = ("name", "init")

    def __init__(self, name: str, data, init: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.init = init

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


_active = threading.local()


def current_tape() -> Optional["Tape"]:
    stack = getattr(_active, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Records backward closures of the operations run while it is active."""

    def __init__(self):
        self._entries: List[Callable[[], None]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        if not hasattr(_active, "stack"):
            _active.stack = []
        _active.stack.append(self)
        return self

    def __exit__(self, *exc):
        _active.stack.pop()
        return False

    def __len__(self):
        return len(self._entries)

    def record(self, backward: Callable[[], None]) -> None:
        if self._consumed:
            raise RuntimeError("tape already replayed")
        self._entries.append(backward)

    def backward(self, loss: Value) -> None:
        if loss.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if self._consumed:
            raise RuntimeError("tape already replayed")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for entry in reversed(self._entries):
            entry()


def _record(inputs: Sequence[Value], outputs: Sequence[Value], backward: Callable[[], None]) -> None:
    tape = current_tape()
    if tape is None or not any(v.requires_grad for v in inputs):
        return
    for out in outputs:
        out.requires_grad = True
    tape.record(backward)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ShapeError(message)


def constant(data, dtype=None) -> Value:
    return Value(np.asarray(data, dtype=dtype))


def embedding(table: Value, ids) -> Value:
    ids = np.asarray(ids, dtype=np.int64)
    _require(table.data.ndim == 2, f"embedding table must be 2-D, got {table.shape}")
    out = Value(table.data[ids])

    def backward():
        if out.grad is None or not table.requires_grad:
            return
        np.add.at(table.grad_buffer(), ids.reshape(-1), out.grad.reshape(-1, table.shape[1]))

    _record([table], [out], backward)
    return out


def concat(values: Sequence[Value], axis: int = -1) -> Value:
    out = Value(np.concatenate([v.data for v in values], axis=axis))
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

    def backward():
        if out.grad is None:
            return
        for v, g in zip(values, np.split(out.grad, bounds, axis=axis)):
            if v.requires_grad:
                v.accumulate(g)

    _record(values, [out], backward)
    return out


def reshape(x: Value, shape) -> Value:
    out = Value(x.data.reshape(shape))

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate(out.grad.reshape(x.shape))

    _record([x], [out], backward)
    return out


def take(x: Value, index: int, axis: int = 0) -> Value:
    """x[..., index, ...] along ``axis``, dropping that axis."""
    where = [slice(None)] * x.data.ndim
    where[axis] = index
    where = tuple(where)
    out = Value(x.data[where])

    def backward():
        if out.grad is not None and x.requires_grad:
            x.grad_buffer()[where] += out.grad

    _record([x], [out], backward)
    return out


def stack(values: Sequence[Value], axis: int = 0) -> Value:
    out = Value(np.stack([v.data for v in values], axis=axis))

    def backward():
        if out.grad is None:
            return
        for i, v in enumerate(values):
            if v.requires_grad:
                v.accumulate(np.take(out.grad, i, axis=axis))

    _record(values, [out], backward)
    return out


def add(a: Value, b: Value) -> Value:
    _require(a.shape == b.shape, f"add: shape mismatch {a.shape} vs {b.shape}")
    out = Value(a.data + b.data)

    def backward():
        if out.grad is None:
            return
        if a.requires_grad:
            a.accumulate(out.grad)
        if b.requires_grad:
            b.accumulate(out.grad)

    _record([a, b], [out], backward)
    return out


def affine(x: Value, W: Value, b: Value) -> Value:
    """y = xW + b over the last axis of x."""
    _require(W.data.ndim == 2, f"affine: weight must be 2-D, got {W.shape}")
    d_in, d_out = W.shape
    _require(x.shape[-1] == d_in, f"affine: input dim {x.shape[-1]} does not match weight {W.shape}")
    _require(b.shape == (d_out,), f"affine: bias shape {b.shape} does not match {d_out}")
    out = Value(x.data @ W.data + b.data)

    def backward():
        g = out.grad
        if g is None:
            return
        if x.requires_grad:
            x.accumulate(g @ W.data.T)
        g2 = g.reshape(-1, d_out)
        if W.requires_grad:
            W.accumulate(x.data.reshape(-1, d_in).T @ g2)
        if b.requires_grad:
            b.accumulate(g2.sum(axis=0))

    _record([x, W, b], [out], backward)
    return out


def conv1d_maxpool(chars: Value, filters: Value, bias: Value, lengths=None) -> Value:
    """Valid 1-D convolution over [..., L, d_c] followed by max over positions.

    ``lengths`` (shape of the leading axes) limits each sequence to its first
    ``lengths`` positions; windows reaching past them never win the max.
    Ties go to the lowest position.
    """
    _require(filters.data.ndim == 3, f"conv: filters must be [k, d_c, f], got {filters.shape}")
    k, d_c, n_filters = filters.shape
    _require(chars.data.ndim >= 2 and chars.shape[-1] == d_c, f"conv: chars {chars.shape} vs filters {filters.shape}")
    _require(bias.shape == (n_filters,), f"conv: bias shape {bias.shape}")
    L = chars.shape[-2]
    _require(L >= k, f"conv: sequence length {L} shorter than kernel {k}")
    lead = chars.shape[:-2]

    x = chars.data.reshape(-1, L, d_c)
    n = x.shape[0]
    positions = L - k + 1
    windows = sliding_window_view(x, k, axis=1).transpose(0, 1, 3, 2).reshape(n, positions, k * d_c)
    W = filters.data.reshape(k * d_c, n_filters)
    conv = windows @ W + bias.data

    if lengths is not None:
        valid = np.maximum(np.asarray(lengths).reshape(-1) - k + 1, 1)
        outside = np.arange(positions)[None, :] >= valid[:, None]
        conv = np.where(outside[:, :, None], -np.inf, conv)

    best = conv.argmax(axis=1)
    rows = np.arange(n)[:, None]
    pooled = conv[rows, best, np.arange(n_filters)[None, :]]
    out = Value(pooled.reshape(lead + (n_filters,)))

    def backward():
        if out.grad is None:
            return
        g = out.grad.reshape(n, n_filters)
        if filters.requires_grad:
            picked = windows[rows, best]
            filters.accumulate(np.einsum("nfj,nf->jf", picked, g).reshape(k, d_c, n_filters))
        if bias.requires_grad:
            bias.accumulate(g.sum(axis=0))
        if chars.requires_grad:
            dwin = np.einsum("jf,nf->nfj", W, g).reshape(n, n_filters, k, d_c)
            dx = np.zeros_like(x)
            for j in range(k):
                np.add.at(dx, (rows, best + j), dwin[:, :, j, :])
            chars.accumulate(dx.reshape(chars.shape))

    _record([chars, filters, bias], [out], backward)
    return out


@dataclass
class LSTMWeights:
    """Input, recurrent and bias weights with gates stacked as [i, f, o, g]."""

    W: Parameter
    U: Parameter
    b: Parameter

    @property
    def state_size(self) -> int:
        return self.U.shape[0]


def lstm_step(x: Value, h_prev: Value, c_prev: Value, weights: LSTMWeights, mask=None) -> Tuple[Value, Value]:
    """One LSTM step; rows with a false ``mask`` come out as exact zeros."""
    s = weights.state_size
    W, U, b = weights.W, weights.U, weights.b
    _require(W.shape == (x.shape[-1], 4 * s), f"lstm: input weight {W.shape} vs input {x.shape}")
    _require(U.shape == (s, 4 * s) and b.shape == (4 * s,), "lstm: recurrent weight/bias shape")
    _require(h_prev.shape[-1] == s and c_prev.shape == h_prev.shape, "lstm: state shape")

    z = x.data @ W.data + h_prev.data @ U.data + b.data
    i = special.expit(z[..., :s])
    f = special.expit(z[..., s:2 * s])
    o = special.expit(z[..., 2 * s:3 * s])
    g = np.tanh(z[..., 3 * s:])
    c = f * c_prev.data + i * g
    tc = np.tanh(c)
    h = o * tc
    m = None
    if mask is not None:
        m = np.asarray(mask, dtype=z.dtype)[..., None]
        h = h * m
        c = c * m
    h_out, c_out = Value(h), Value(c)

    def backward():
        if h_out.grad is None and c_out.grad is None:
            return
        gh = h_out.gradient()
        gc = c_out.gradient()
        if m is not None:
            gh = gh * m
            gc = gc * m
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [dc * g * i * (1.0 - i), dc * c_prev.data * f * (1.0 - f), gh * tc * o * (1.0 - o), dc * i * (1.0 - g * g)],
            axis=-1,
        )
        if x.requires_grad:
            x.accumulate(dz @ W.data.T)
        if h_prev.requires_grad:
            h_prev.accumulate(dz @ U.data.T)
        if c_prev.requires_grad:
            c_prev.accumulate(dc * f)
        dz2 = dz.reshape(-1, 4 * s)
        if W.requires_grad:
            W.accumulate(x.data.reshape(-1, x.shape[-1]).T @ dz2)
        if U.requires_grad:
            U.accumulate(h_prev.data.reshape(-1, s).T @ dz2)
        if b.requires_grad:
            b.accumulate(dz2.sum(axis=0))

    _record([x, h_prev, c_prev, W, U, b], [h_out, c_out], backward)
    return h_out, c_out


def _scan(xs: Value, weights: LSTMWeights, order, mask) -> Value:
    batch, steps = xs.shape[0], xs.shape[1]
    zero = Value(np.zeros((batch, weights.state_size), dtype=xs.dtype))
    h, c = zero, zero
    outputs: List[Optional[Value]] = [None] * steps
    for t in order:
        h, c = lstm_step(take(xs, t, axis=1), h, c, weights, None if mask is None else mask[:, t])
        outputs[t] = h
    return stack(outputs, axis=1)


def bilstm(xs: Value, fwd: LSTMWeights, bwd: LSTMWeights, mask=None) -> Tuple[Value, Value]:
    """Left-to-right and right-to-left scans from zero states.

    ``xs`` is [T, d] or [B, T, d]. With a [B, T] mask, padded positions reset
    the state so the backward scan of a short sentence starts clean at its
    last real token.
    """
    _require(xs.data.ndim in (2, 3) and xs.shape[-2] >= 1, f"bilstm: bad input shape {xs.shape}")
    batched = xs.data.ndim == 3
    if not batched:
        xs = reshape(xs, (1,) + xs.shape)
        if mask is not None:
            mask = np.asarray(mask)[None, :]
    steps = xs.shape[1]
    hf = _scan(xs, fwd, range(steps), mask)
    hb = _scan(xs, bwd, reversed(range(steps)), mask)
    if not batched:
        hf = reshape(hf, hf.shape[1:])
        hb = reshape(hb, hb.shape[1:])
    return hf, hb


def dropout(x: Value, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> Value:
    """Inverted dropout; identity at inference or with rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    out = Value(x.data * keep)

    def backward():
        if out.grad is not None and x.requires_grad:
            x.accumulate(out.grad * keep)

    _record([x], [out], backward)
    return out


def log_softmax(z: Value) -> Value:
    out = Value(special.log_softmax(z.data, axis=-1))

    def backward():
        if out.grad is None or not z.requires_grad:
            return
        g = out.grad
        z.accumulate(g - np.exp(out.data) * g.sum(axis=-1, keepdims=True))

    _record([z], [out], backward)
    return out


def masked_nll(logp: Value, gold, mask) -> Value:
    """Mean negative log-likelihood of ``gold`` over unmasked positions."""
    gold = np.asarray(gold, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    _require(gold.shape == logp.shape[:-1] and mask.shape == gold.shape, "nll: gold/mask/logp shapes disagree")
    _require(bool((gold >= 0).all() and (gold < logp.shape[-1]).all()), "nll: gold index out of range")
    count = int(mask.sum())
    _require(count > 0, "nll: empty mask")
    weights = mask.astype(logp.dtype) / logp.dtype.type(count)
    picked = np.take_along_axis(logp.data, gold[..., None], axis=-1)[..., 0]
    picked = np.where(mask, picked, 0.0)
    out = Value(-(picked * weights).sum())

    def backward():
        if out.grad is None or not logp.requires_grad:
            return
        grad = np.zeros_like(logp.data)
        np.put_along_axis(grad, gold[..., None], (-weights * out.grad)[..., None], axis=-1)
        logp.accumulate(grad)

    _record([logp], [out], backward)
    return out


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPSILON

    @classmethod
    def for_parameters(cls, params: Sequence[Parameter]) -> "AdamState":
        return cls(
            m={p.name: np.zeros_like(p.data) for p in params},
            v={p.name: np.zeros_like(p.data) for p in params},
        )


def gradients(params: Sequence[Parameter]) -> List[np.ndarray]:
    return [p.gradient() for p in params]


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))


def adam_step(
    params: Sequence[Parameter],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    clip: float = CLIP_NORM,
) -> bool:
    """Clip to global norm ``clip`` then apply one bias-corrected Adam update.

    Returns False, leaving everything untouched, when a gradient is not finite.
    """
    if clip <= 0:
        raise ValueError(f"clip must be positive, got {clip}")
    norm = global_norm(grads)
    if not np.isfinite(norm):
        log.warning("Skipping Adam step %d: non-finite gradient norm", state.t + 1)
        return False
    scale = clip / norm if norm > clip else 1.0
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for p, g in zip(params, grads):
        if scale != 1.0:
            g = g * p.dtype.type(scale)
        m, v = state.m[p.name], state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= (lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)).astype(p.dtype)
    return True


class HasParameters(Protocol):
    def parameters(self) -> List[Parameter]: ...


@dataclass(frozen=True)
class CoordinateCheck:
    parameter: str
    index: Tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def abs_error(self) -> float:
        return abs(self.analytic - self.numeric)

    @property
    def rel_error(self) -> float:
        return self.abs_error / max(abs(self.analytic), abs(self.numeric), 1e-8)


@dataclass
class GradCheckReport:
    tolerance: float
    atol: float = GRADCHECK_ATOL
    checks: List[CoordinateCheck] = field(default_factory=list)

    def failed(self, check: CoordinateCheck) -> bool:
        return check.rel_error >= self.tolerance and check.abs_error > self.atol

    @property
    def failures(self) -> List[CoordinateCheck]:
        return [c for c in self.checks if self.failed(c)]

    @property
    def passed(self) -> bool:
        return not self.failures

    def worst(self, n: int = 5) -> List[CoordinateCheck]:
        return sorted(self.checks, key=lambda c: c.rel_error, reverse=True)[:n]

    def raise_for_failure(self) -> None:
        if self.passed:
            return
        lines = [f"{len(self.failures)} of {len(self.checks)} coordinates exceed tolerance {self.tolerance:g}:"]
        for c in self.worst():
            lines.append(f"  {c.parameter}{list(c.index)} analytic={c.analytic:.6g} numeric={c.numeric:.6g} rel={c.rel_error:.3g}")
        raise GradCheckError("\n".join(lines))


def grad_check(
    build: Callable[[], HasParameters],
    loss_fn: Callable[[HasParameters], Value],
    tolerance: float = GRADCHECK_TOLERANCE,
    samples: int = GRADCHECK_SAMPLES,
    step: float = GRADCHECK_STEP,
    seed: int = 0,
) -> GradCheckReport:
    """Compare taped gradients against central differences.

    Every tensor contributes ``samples`` coordinates (all of them when it is
    smaller). Parameters must be 64-bit.
    """
    model = build()
    params = model.parameters()
    for p in params:
        if p.dtype != np.float64:
            raise GradCheckError(f"gradient check needs float64 parameters, {p.name} is {p.dtype}")
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn(model)
        tape.backward(loss)
    analytic = {p.name: p.gradient().copy() for p in params}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance)
    for p in params:
        size = p.data.size
        coords = np.arange(size) if size <= samples else np.sort(rng.choice(size, samples, replace=False))
        for flat in coords:
            index = np.unravel_index(int(flat), p.shape)
            original = p.data[index]
            p.data[index] = original + step
            plus = loss_fn(model).item()
            p.data[index] = original - step
            minus = loss_fn(model).item()
            p.data[index] = original
            numeric = (plus - minus) / (2 * step)
            report.checks.append(
                CoordinateCheck(p.name, tuple(int(i) for i in index), float(analytic[p.name][index]), numeric)
            )
    log.info("Gradient check: %d coordinates, %d failing", len(report.checks), len(report.failures))
    return report

"""Minimal dense numerical core: 2-D tensors with reverse-mode gradients, Adam, and a portable RNG.

Tensors are float64 numpy arrays with an attached backward closure. Every op checks its
output is finite; NaN or Inf raises ``NonFinite`` at the op that produced it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

MASK64 = (1 << 64) - 1
CHECKPOINT_FORMAT = "symdistill-checkpoint"
CHECKPOINT_VERSION = 1


class ShapeMismatch(ValueError):
    pass


class NonFinite(FloatingPointError):
    pass


class GraphNotEvaluated(RuntimeError):
    pass


# --- RNG -------------------------------------------------------------------

class SplitMix64:
    """SplitMix64 over Python integers; the stream is identical on every platform."""

    def __init__(self, seed: int):
        self.state = seed & MASK64
        self._spare: Optional[float] = None

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform()

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) (Lemire's multiply-and-reject)."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = ((1 << 64) - n) % n
        while True:
            m = self.next_u64() * n
            if (m & MASK64) >= threshold:
                return m >> 64

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        self.shuffle(items)
        return items

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def uniform_array(self, rows: int, cols: int, low: float, high: float) -> np.ndarray:
        vals = [low + (high - low) * ((self.next_u64() >> 11) * (1.0 / (1 << 53))) for _ in range(rows * cols)]
        return np.array(vals, dtype=np.float64).reshape(rows, cols)


def seeded_rng(seed: int) -> SplitMix64:
    return SplitMix64(seed)


# --- tensors ---------------------------------------------------------------

def _check(data: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(data).all():
        raise NonFinite(f"non-finite value produced by {op}")
    return data


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (), backward_fn: Optional[Callable] = None, name: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeMismatch(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name!r})"


def parameter(data, name: str = "") -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g.copy() if t.grad is None else t.grad + g


def _out(data, op: str, parents, backward_fn) -> Tensor:
    return Tensor(_check(data, op), parents=parents, backward_fn=backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

    def back(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _out(a.data @ b.data, "matmul", (a, b), back)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    if b.shape != (1, x.shape[1]):
        raise ShapeMismatch(f"bias {b.shape} for input {x.shape}")

    def back(g):
        _accum(x, g)
        _accum(b, g.sum(axis=0, keepdims=True))

    return _out(x.data + b.data, "add_bias", (x, b), back)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add {a.shape} + {b.shape}")

    def back(g):
        _accum(a, g)
        _accum(b, g)

    return _out(a.data + b.data, "add", (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    def back(g):
        _accum(a, g * c)

    return _out(a.data * c, "scale", (a,), back)


def add_const(a: Tensor, c: np.ndarray) -> Tensor:
    """Add a constant (no gradient), e.g. a logit mask."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != a.shape:
        raise ShapeMismatch(f"add_const {a.shape} + {c.shape}")

    def back(g):
        _accum(a, g)

    return _out(a.data + c, "add_const", (a,), back)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def back(g):
        _accum(x, g * mask)

    return _out(np.where(mask, x.data, 0.0), "relu", (x,), back)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)

    def back(g):
        _accum(x, g * s * (1.0 - s))

    return _out(s, "sigmoid", (x,), back)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    s = _softmax(x.data)

    def back(g):
        _accum(x, s * (g - (g * s).sum(axis=1, keepdims=True)))

    return _out(s, "softmax", (x,), back)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64).ravel()
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(f"embedding id out of range for table {table.shape}")

    def back(g):
        if table.requires_grad:
            _accum(table, scatter_rows(table.shape[0], ids, g))

    return _out(table.data[ids], "embedding_lookup", (table,), back)


def scatter_rows(n_rows: int, ids: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Sum rows of ``g`` into an ``n_rows`` table by index (deterministic order)."""
    full = np.empty((n_rows, g.shape[1]))
    for col in range(g.shape[1]):
        full[:, col] = np.bincount(ids, weights=g[:, col], minlength=n_rows)
    return full


def segment_mean(x: Tensor, lengths) -> Tensor:
    """Mean over consecutive row segments of ``x``; segment b has ``lengths[b]`` rows (empty → zeros)."""
    lengths = np.asarray(lengths, dtype=np.int64).ravel()
    if (lengths < 0).any() or lengths.sum() != x.shape[0]:
        raise ShapeMismatch(f"segment lengths sum to {lengths.sum()}, tensor has {x.shape[0]} rows")
    owner = np.repeat(np.arange(lengths.shape[0]), lengths)
    pool = np.zeros((lengths.shape[0], x.shape[0]))
    pool[owner, np.arange(x.shape[0])] = 1.0 / np.maximum(lengths, 1)[owner]

    def back(g):
        _accum(x, pool.T @ g)

    return _out(pool @ x.data, "segment_mean", (x,), back)


def mean_pool(x: Tensor, lengths, seq_len: int) -> Tensor:
    """Mean over the first ``lengths[b]`` rows of each ``seq_len``-row block of ``x``."""
    lengths = np.asarray(lengths, dtype=np.int64)
    batch = lengths.shape[0]
    if x.shape[0] != batch * seq_len:
        raise ShapeMismatch(f"mean_pool over {x.shape} with batch {batch} x {seq_len}")
    if (lengths > seq_len).any() or (lengths < 0).any():
        raise ShapeMismatch("sequence length outside [0, seq_len]")
    mask = (np.arange(seq_len)[None, :] < lengths[:, None]).astype(np.float64)  # B x L
    denom = np.maximum(lengths, 1).astype(np.float64)[:, None]
    weights = mask / denom
    x3 = x.data.reshape(batch, seq_len, -1)
    out = np.einsum("bl,bld->bd", weights, x3)

    def back(g):
        _accum(x, (weights[:, :, None] * g[:, None, :]).reshape(x.shape))

    return _out(out, "mean_pool", (x,), back)


def concat_cols(parts: list[Tensor]) -> Tensor:
    rows = parts[0].shape[0]
    if any(p.shape[0] != rows for p in parts):
        raise ShapeMismatch("concat_cols needs equal row counts")
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def back(g):
        for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[:, a:b])

    return _out(np.concatenate([p.data for p in parts], axis=1), "concat_cols", tuple(parts), back)


def log_softmax_np(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=1, keepdims=True))


def cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under row-wise softmax (weighted mean if given)."""
    targets = np.asarray(targets, dtype=np.int64).ravel()
    n = logits.shape[0]
    if targets.shape[0] != n:
        raise ShapeMismatch(f"{n} logit rows but {targets.shape[0]} targets")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    total = w.sum()
    if total <= 0:
        raise ValueError("cross_entropy needs positive total weight")
    logp = log_softmax_np(logits.data)
    nll = -logp[np.arange(n), targets]
    loss = float((w * nll).sum() / total)

    def back(g):
        p = np.exp(logp)
        p[np.arange(n), targets] -= 1.0
        _accum(logits, g[0, 0] * p * (w / total)[:, None])

    return _out(np.array([[loss]]), "cross_entropy", (logits,), back)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 ``targets`` over all entries."""
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeMismatch(f"bce targets {y.shape} vs logits {logits.shape}")
    z = logits.data
    loss = float((np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))).mean())

    def back(g):
        _accum(logits, g[0, 0] * (_sigmoid(z) - y) / y.size)

    return _out(np.array([[loss]]), "bce_with_logits", (logits,), back)


def backward(loss: Tensor, params: Optional[dict] = None) -> Optional[dict]:
    """Reverse-mode sweep from a scalar ``loss``; returns gradients of ``params`` when given."""
    if loss.shape != (1, 1):
        raise ShapeMismatch(f"backward needs a 1x1 loss, got {loss.shape}")
    if loss.backward_fn is None:
        raise GraphNotEvaluated("loss was not produced by a recorded forward computation")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:
        node.grad = None
    loss.grad = np.ones((1, 1))
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)
    if params is None:
        return None
    return {
        k: (p.grad if id(p) in seen and p.grad is not None else np.zeros_like(p.data))
        for k, p in params.items()
    }


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# --- Adam ------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "t": self.t,
            "m": {k: _arr_json(a) for k, a in sorted(self.m.items())},
            "v": {k: _arr_json(a) for k, a in sorted(self.v.items())},
        }

    @classmethod
    def from_json(cls, d) -> "AdamState":
        return cls(
            d["lr"], d["beta1"], d["beta2"], d["eps"], d["t"],
            {k: _arr_from_json(a) for k, a in d["m"].items()},
            {k: _arr_from_json(a) for k, a in d["v"].items()},
        )


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update, in place on the parameter arrays."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name in sorted(params):
        p = params[name]
        data = p.data if isinstance(p, Tensor) else p
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(data)
        if g.shape != data.shape:
            raise ShapeMismatch(f"gradient {g.shape} for parameter {name} {data.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(data)
            v = np.zeros_like(data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        _check(data, f"adam update of {name}")
    return params, state


# --- checkpoints -----------------------------------------------------------

def _arr_json(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _arr_from_json(d) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def save_checkpoint(path, params: dict, state: Optional[AdamState] = None, header: Optional[dict] = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "header": header or {},
        "params": {k: _arr_json(p.data if isinstance(p, Tensor) else p) for k, p in sorted(params.items())},
        "adam": None if state is None else state.to_json(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=False) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[dict, Optional[AdamState], dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    params = {k: _arr_from_json(a) for k, a in doc["params"].items()}
    state = None if doc["adam"] is None else AdamState.from_json(doc["adam"])
    return params, state, doc["header"]

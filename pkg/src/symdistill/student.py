"""Compact student classifier shared by the label-only and reasoning-distilled variants.

Architecture: token embedding -> per-position dense layer with ReLU -> mean pool over
non-PAD positions -> fix-type head (softmax over 9) and tag head (independent sigmoids).
Both variants allocate the tag head; only the distilled variant's loss reaches it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from symdistill import tinylearn as tl
from symdistill.taxonomy import NUM_FIX_TYPES, NUM_TAGS, TAG_INDEX, TAGS

VARIANTS = ("label_only", "reasoning_distilled")
INIT_SCALE = 0.05


@dataclass(frozen=True)
class StudentConfig:
    vocab_size: int
    embed_dim: int = 128
    hidden_dim: int = 128
    num_fix_types: int = NUM_FIX_TYPES
    num_tags: int = NUM_TAGS
    lambda_reason: float = 1.0
    variant: str = "reasoning_distilled"
    tag_threshold: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.lambda_reason < 0:
            raise ValueError("lambda_reason must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class StudentModel:
    config: StudentConfig
    params: dict = field(default_factory=dict)  # name -> tl.Tensor

    def arrays(self) -> dict:
        return {k: p.data for k, p in self.params.items()}

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())


@dataclass(frozen=True)
class Prediction:
    fix_probs: tuple[float, ...]
    tag_probs: tuple[float, ...]
    predicted_fix: int
    predicted_trace: tuple[str, ...]


PARAM_SHAPES = ("embedding", "enc_w", "enc_b", "fix_w", "fix_b", "tag_w", "tag_b")


def param_shapes(config: StudentConfig) -> dict:
    return {
        "embedding": (config.vocab_size, config.embed_dim),
        "enc_w": (config.embed_dim, config.hidden_dim),
        "enc_b": (1, config.hidden_dim),
        "fix_w": (config.hidden_dim, config.num_fix_types),
        "fix_b": (1, config.num_fix_types),
        "tag_w": (config.hidden_dim, config.num_tags),
        "tag_b": (1, config.num_tags),
    }


def init_params(config: StudentConfig, seed: int) -> StudentModel:
    """Weights uniform in (-0.05, 0.05), biases zero; the draw order is fixed so it is seed-deterministic."""
    rng = tl.SplitMix64(seed)
    params = {}
    for name, (r, c) in param_shapes(config).items():
        if name.endswith("_b"):
            data = np.zeros((r, c))
        else:
            data = rng.uniform_array(r, c, -INIT_SCALE, INIT_SCALE)
        params[name] = tl.parameter(data, name)
    return StudentModel(config, params)


def zero_model(config: StudentConfig) -> StudentModel:
    return StudentModel(config, {n: tl.parameter(np.zeros(s), n) for n, s in param_shapes(config).items()})


def model_from_arrays(config: StudentConfig, arrays: dict) -> StudentModel:
    shapes = param_shapes(config)
    params = {}
    for name, shape in shapes.items():
        a = np.asarray(arrays[name], dtype=np.float64)
        if a.shape != shape:
            raise tl.ShapeMismatch(f"{name}: expected {shape}, got {a.shape}")
        params[name] = tl.parameter(a.copy(), name)
    return StudentModel(config, params)


def encode_batch(model: StudentModel, ids: np.ndarray, lengths: np.ndarray) -> tl.Tensor:
    """Pooled hidden representation, one row per sequence."""
    p = model.params
    batch, seq_len = ids.shape
    if (lengths > seq_len).any() or (lengths < 0).any():
        raise tl.ShapeMismatch("sequence length outside [0, max_len]")
    # PAD positions never reach the pool, so only the first lengths[b] ids are embedded
    real = np.arange(seq_len)[None, :] < lengths[:, None]
    emb = tl.embedding_lookup(p["embedding"], ids[real])
    hidden = tl.relu(tl.add_bias(tl.matmul(emb, p["enc_w"]), p["enc_b"]))
    return tl.segment_mean(hidden, lengths)


def forward_batch(model: StudentModel, ids, lengths) -> tuple[tl.Tensor, tl.Tensor]:
    ids = np.asarray(ids, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if ids.ndim != 2:
        raise tl.ShapeMismatch("ids must be batch x max_len")
    p = model.params
    pooled = encode_batch(model, ids, lengths)
    fix_logits = tl.add_bias(tl.matmul(pooled, p["fix_w"]), p["fix_b"])
    tag_logits = tl.add_bias(tl.matmul(pooled, p["tag_w"]), p["tag_b"])
    return fix_logits, tag_logits


def decode_trace(tag_probs: Sequence[float], threshold: float = 0.5) -> tuple[str, ...]:
    # strictly above the threshold; canonical vocabulary order
    return tuple(t for t, p in zip(TAGS, tag_probs) if p > threshold)


def argmax_first(values: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def predictions_from_logits(fix_logits: np.ndarray, tag_logits: np.ndarray, threshold: float = 0.5) -> list[Prediction]:
    fix_probs = tl._softmax(fix_logits)
    tag_probs = tl._sigmoid(tag_logits)
    out = []
    for fp, tp in zip(fix_probs, tag_probs):
        out.append(Prediction(tuple(fp.tolist()), tuple(tp.tolist()), argmax_first(fp), decode_trace(tp, threshold)))
    return out


def forward(model: StudentModel, sequence) -> Prediction:
    ids = np.asarray([sequence.ids], dtype=np.int64)
    lengths = np.asarray([sequence.length], dtype=np.int64)
    fix_logits, tag_logits = forward_batch(model, ids, lengths)
    return predictions_from_logits(fix_logits.data, tag_logits.data, model.config.tag_threshold)[0]


def predict_batch(model: StudentModel, ids, lengths, batch_size: int = 64) -> list[Prediction]:
    ids = np.asarray(ids, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    out: list[Prediction] = []
    for s in range(0, len(ids), batch_size):
        fl, tg = forward_batch(model, ids[s:s + batch_size], lengths[s:s + batch_size])
        out.extend(predictions_from_logits(fl.data, tg.data, model.config.tag_threshold))
    return out


def tag_indicator(trace: Sequence[str]) -> np.ndarray:
    y = np.zeros(NUM_TAGS)
    for t in trace:
        y[TAG_INDEX[t]] = 1.0
    return y


# Loss on a finished Prediction (probability space); used for reporting and checks.

def loss_label_only(pred: Prediction, gold_fix: int) -> float:
    if not 0 <= gold_fix < len(pred.fix_probs):
        raise ValueError(f"gold fix index {gold_fix} out of range")
    p = pred.fix_probs[gold_fix]
    return math.inf if p <= 0 else -math.log(p)


def loss_joint(pred: Prediction, gold_fix: int, gold_trace: Sequence[str], lambda_reason: float) -> float:
    ce = loss_label_only(pred, gold_fix)
    if lambda_reason == 0:
        return ce
    y = tag_indicator(gold_trace)
    total = 0.0
    for p, yi in zip(pred.tag_probs, y):
        q = p if yi else 1.0 - p
        total += math.inf if q <= 0 else -math.log(q)
    return ce + lambda_reason * total / len(y)


# Loss on logits (graph form) used for training.

def batch_loss(model: StudentModel, ids, lengths, gold_fix, gold_tags: Optional[np.ndarray] = None) -> tl.Tensor:
    """Mean loss over the batch for the model's variant."""
    fix_logits, tag_logits = forward_batch(model, ids, lengths)
    loss = tl.cross_entropy(fix_logits, gold_fix)
    if model.config.variant == "reasoning_distilled":
        if gold_tags is None:
            raise ValueError("the distilled variant needs gold tag indicators")
        loss = tl.add(loss, tl.scale(tl.bce_with_logits(tag_logits, gold_tags), model.config.lambda_reason))
    return loss

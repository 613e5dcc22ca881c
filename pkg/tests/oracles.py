"""Independent reference implementations used to check the package.

Nothing here imports the package's metric or loss code; recounts walk the raw lists.
"""

from __future__ import annotations

import math

import numpy as np

TAG_NAMES = ("LOOP_BOUND_ERROR", "CMP_ERROR", "MISSING_BRANCH", "INDEX_ERROR", "RETURN_ERROR",
             "IO_ERROR", "INIT_UNSET", "OP_SUBSTITUTION", "CONST_ERROR")


def naive_accuracy(preds, golds):
    hits = 0
    for p, g in zip(preds, golds):
        if p == g:
            hits += 1
    return hits / len(golds)


def _f1_from_sets(pred_pos: set, gold_pos: set) -> float:
    tp = len(pred_pos & gold_pos)
    if tp == 0:
        return 0.0
    precision = tp / len(pred_pos)
    recall = tp / len(gold_pos)
    return 2 * precision * recall / (precision + recall)


def naive_per_class_f1(preds, golds, n_classes=9):
    out = []
    for c in range(n_classes):
        pred_pos = {i for i, p in enumerate(preds) if p == c}
        gold_pos = {i for i, g in enumerate(golds) if g == c}
        out.append(_f1_from_sets(pred_pos, gold_pos))
    return out


def naive_macro_f1(preds, golds, n_classes=9):
    f = naive_per_class_f1(preds, golds, n_classes)
    return sum(f) / len(f)


def naive_tag_scores(pred_traces, gold_traces, vocab=TAG_NAMES):
    """(micro, macro over active tags, per-tag accuracy) by listing every membership decision."""
    decisions = []  # (tag, predicted, gold)
    for p, g in zip(pred_traces, gold_traces):
        for t in vocab:
            decisions.append((t, t in p, t in g))
    tp = sum(1 for _, a, b in decisions if a and b)
    fp = sum(1 for _, a, b in decisions if a and not b)
    fn = sum(1 for _, a, b in decisions if b and not a)
    micro = 1.0 if tp + fp + fn == 0 else (2 * tp / (2 * tp + fp + fn))
    per_tag = []
    per_acc = {}
    for t in vocab:
        mine = [(a, b) for u, a, b in decisions if u == t]
        t_tp = sum(1 for a, b in mine if a and b)
        t_fp = sum(1 for a, b in mine if a and not b)
        t_fn = sum(1 for a, b in mine if b and not a)
        if t_tp + t_fp + t_fn:
            per_tag.append(2 * t_tp / (2 * t_tp + t_fp + t_fn))
        per_acc[t] = sum(1 for a, b in mine if a == b) / len(mine) if mine else 1.0
    macro = sum(per_tag) / len(per_tag) if per_tag else 1.0
    return micro, macro, per_acc


def naive_exact_match(pred_traces, gold_traces):
    return sum(1 for p, g in zip(pred_traces, gold_traces) if list(p) == list(g)) / len(gold_traces)


def naive_conditional(pred_fix, pred_traces, gold_fix, gold_traces):
    right, wrong = [], []
    for pf, pt, gf, gt in zip(pred_fix, pred_traces, gold_fix, gold_traces):
        (right if list(pt) == list(gt) else wrong).append(pf == gf)
    def rate(xs):
        return sum(xs) / len(xs) if xs else None
    return rate(right), rate(wrong), len(right), len(wrong)


# --- finite differences on the student losses --------------------------------------------

def _central(f, x, h):
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def student_gradient_error(variant: str, point_seed: int, h: float = 1e-5) -> float:
    """Max relative error between graph gradients and central differences of the probability-space loss.

    The numeric side evaluates ``loss_label_only`` / ``loss_joint`` on ``forward`` predictions, so it
    shares no code with the analytic side beyond the forward pass.
    """
    from symdistill import tinylearn as tl
    from symdistill.encode import TokenSequence
    from symdistill.student import StudentConfig, batch_loss, forward, init_params, loss_joint, loss_label_only

    rng = np.random.default_rng(point_seed)
    lam = float(rng.uniform(0.25, 2.0))
    config = StudentConfig(vocab_size=11, embed_dim=4, hidden_dim=5, lambda_reason=lam, variant=variant)
    model = init_params(config, point_seed)
    for p in model.params.values():
        p.data[...] = rng.normal(scale=0.6, size=p.data.shape)
    length = int(rng.integers(3, 9))
    ids = [int(i) for i in rng.integers(1, 11, size=length)] + [0] * (10 - length)
    seq = TokenSequence(tuple(ids), length)
    gold_fix = int(rng.integers(0, 9))
    gold_trace = [t for t in TAG_NAMES if rng.uniform() < 0.3] or [TAG_NAMES[0]]
    tags = np.array([[1.0 if t in gold_trace else 0.0 for t in TAG_NAMES]])

    loss = batch_loss(model, np.array([ids]), np.array([length]), np.array([gold_fix]),
                      tags if variant == "reasoning_distilled" else None)
    grads = tl.backward(loss, model.params)

    def numeric_loss():
        pred = forward(model, seq)
        if variant == "label_only":
            return loss_label_only(pred, gold_fix)
        return loss_joint(pred, gold_fix, gold_trace, lam)

    assert math.isclose(loss.item(), numeric_loss(), rel_tol=1e-10)
    worst = 0.0
    for name, p in model.params.items():
        numeric = _central(numeric_loss, p.data, h)
        analytic = grads[name]
        err = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
        worst = max(worst, float(err.max()))
    return worst


# --- acceptance reporting ------------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def fmt(value) -> str:
    return "n/a" if value is None else f"{value:.3f}"

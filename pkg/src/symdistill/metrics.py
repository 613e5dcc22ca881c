"""Evaluation metrics for fix-type prediction and reasoning traces."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from symdistill.taxonomy import FIX_TYPES, NUM_FIX_TYPES, TAGS


class EmptyInput(ValueError):
    pass


class EmptySplit(ValueError):
    pass


class NoTraceOutputs(ValueError):
    pass


def _check_lengths(a: Sequence, b: Sequence) -> None:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} predictions vs {len(b)} golds")
    if not a:
        raise EmptyInput("no examples to score")


def accuracy(preds: Sequence[int], golds: Sequence[int]) -> float:
    _check_lengths(preds, golds)
    return sum(p == g for p, g in zip(preds, golds)) / len(golds)


def confusion_matrix(preds: Sequence[int], golds: Sequence[int], num_classes: int = NUM_FIX_TYPES) -> np.ndarray:
    """Rows are gold classes, columns predicted classes."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for p, g in zip(preds, golds):
        cm[g, p] += 1
    return cm


def _f1(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def per_class_f1(confusion: np.ndarray) -> list[float]:
    tp = np.diag(confusion)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    return [_f1(int(a), int(b), int(c)) for a, b, c in zip(tp, fp, fn)]


def macro_f1(confusion: np.ndarray, include_absent: bool = True) -> float:
    """Unweighted mean of per-class F1.

    With ``include_absent`` (default) every class counts, so a class with no gold
    examples and no predictions contributes 0. Otherwise only classes present in
    the gold labels are averaged.
    """
    f1 = per_class_f1(confusion)
    if include_absent:
        return float(sum(f1) / len(f1))
    present = [f for f, support in zip(f1, confusion.sum(axis=1)) if support > 0]
    return float(sum(present) / len(present)) if present else 0.0


@dataclass(frozen=True)
class TagScores:
    micro: float
    macro: float
    per_tag_f1: dict
    per_tag_accuracy: dict


def tag_f1(pred_traces: Sequence[Sequence[str]], gold_traces: Sequence[Sequence[str]], vocabulary: Sequence[str] = TAGS) -> TagScores:
    """Scores over (example, tag) membership decisions.

    Micro F1 pools counts over all tags (1.0 when there are no positives anywhere).
    Macro F1 averages per-tag F1 over tags that occur in gold or prediction.
    """
    if len(pred_traces) != len(gold_traces):
        raise ValueError("length mismatch between predicted and gold traces")
    n = len(gold_traces)
    tp = {t: 0 for t in vocabulary}
    fp = dict(tp)
    fn = dict(tp)
    correct = dict(tp)
    for pred, gold in zip(pred_traces, gold_traces):
        ps, gs = set(pred), set(gold)
        for t in vocabulary:
            inp, ing = t in ps, t in gs
            tp[t] += inp and ing
            fp[t] += inp and not ing
            fn[t] += ing and not inp
            correct[t] += inp == ing
    TP, FP, FN = sum(tp.values()), sum(fp.values()), sum(fn.values())
    micro = 1.0 if TP + FP + FN == 0 else _f1(TP, FP, FN)
    per_tag = {t: _f1(tp[t], fp[t], fn[t]) for t in vocabulary}
    active = [t for t in vocabulary if tp[t] + fp[t] + fn[t] > 0]
    macro = sum(per_tag[t] for t in active) / len(active) if active else 1.0
    per_tag_acc = {t: (correct[t] / n if n else 1.0) for t in vocabulary}
    return TagScores(micro, macro, per_tag, per_tag_acc)


def exact_match(pred_traces: Sequence[Sequence[str]], gold_traces: Sequence[Sequence[str]], set_semantics: bool = False) -> float:
    _check_lengths(pred_traces, gold_traces)
    if set_semantics:
        hits = sum(set(p) == set(g) for p, g in zip(pred_traces, gold_traces))
    else:
        hits = sum(tuple(p) == tuple(g) for p, g in zip(pred_traces, gold_traces))
    return hits / len(gold_traces)


@dataclass(frozen=True)
class Conditional:
    acc_given_trace_correct: Optional[float]
    acc_given_trace_incorrect: Optional[float]
    n_correct_trace: int
    n_incorrect_trace: int


def conditional_accuracy(preds: Sequence, golds: Sequence, set_semantics: bool = False) -> Conditional:
    """Fix-type accuracy split by whether the predicted trace exactly matches the gold trace.

    ``preds`` carry ``predicted_fix`` and ``predicted_trace``; ``golds`` carry
    ``fix_type`` and ``trace``. An empty partition reports accuracy ``None``.
    """
    _check_lengths(preds, golds)
    if any(getattr(p, "predicted_trace", None) is None for p in preds):
        raise NoTraceOutputs("predictions carry no reasoning traces")
    buckets = {True: [0, 0], False: [0, 0]}  # [n, fix correct]
    for p, g in zip(preds, golds):
        if set_semantics:
            match = set(p.predicted_trace) == set(g.trace)
        else:
            match = tuple(p.predicted_trace) == tuple(g.trace)
        b = buckets[match]
        b[0] += 1
        b[1] += p.predicted_fix == _fix_index(g.fix_type)
    def rate(b):
        return b[1] / b[0] if b[0] else None
    return Conditional(rate(buckets[True]), rate(buckets[False]), buckets[True][0], buckets[False][0])


def _fix_index(fix) -> int:
    return fix if isinstance(fix, int) else FIX_TYPES.index(fix)


@dataclass
class EvalReport:
    variant: str
    split: str
    n_examples: int
    accuracy: float
    macro_f1: float
    macro_f1_present_only: float
    per_class_f1: dict
    per_class_support: dict
    confusion: list
    tag_micro_f1: Optional[float] = None
    tag_macro_f1: Optional[float] = None
    exact_match: Optional[float] = None
    per_tag_f1: Optional[dict] = None
    per_tag_accuracy: Optional[dict] = None
    conditional: Optional[dict] = None  # None: not applicable (label-only model)
    oov_rate: Optional[float] = None

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "EvalReport":
        return cls(**d)

    def to_text(self) -> str:
        return render_tables([self])


def score_predictions(preds: Sequence, gold_fix: Sequence[int], gold_traces: Optional[Sequence[Sequence[str]]],
                      variant: str, split: str, set_semantics: bool = False, oov: Optional[float] = None) -> EvalReport:
    if not preds:
        raise EmptySplit(f"split {split!r} has no examples")
    fix_pred = [p.predicted_fix for p in preds]
    cm = confusion_matrix(fix_pred, gold_fix)
    f1 = per_class_f1(cm)
    report = EvalReport(
        variant=variant,
        split=split,
        n_examples=len(preds),
        accuracy=accuracy(fix_pred, gold_fix),
        macro_f1=macro_f1(cm),
        macro_f1_present_only=macro_f1(cm, include_absent=False),
        per_class_f1={f.value: v for f, v in zip(FIX_TYPES, f1)},
        per_class_support={f.value: int(s) for f, s in zip(FIX_TYPES, cm.sum(axis=1))},
        confusion=cm.tolist(),
        oov_rate=oov,
    )
    if variant == "reasoning_distilled" and gold_traces is not None:
        traces = [p.predicted_trace for p in preds]
        tags = tag_f1(traces, gold_traces)
        report.tag_micro_f1 = tags.micro
        report.tag_macro_f1 = tags.macro
        report.per_tag_f1 = tags.per_tag_f1
        report.per_tag_accuracy = tags.per_tag_accuracy
        report.exact_match = exact_match(traces, gold_traces, set_semantics)
        golds = [_Gold(g, t) for g, t in zip(gold_fix, gold_traces)]
        report.conditional = asdict(conditional_accuracy(preds, golds, set_semantics))
    return report


@dataclass(frozen=True)
class _Gold:
    fix_type: int
    trace: tuple


def _fmt(v: Optional[float], digits: int = 3) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}"


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    line = "-+-".join("-" * w for w in widths)
    def fmt(r):
        return " | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(header), line] + [fmt(r) for r in rows])


LABELS = {"label_only": "Student (label-only)", "reasoning_distilled": "Student (reasoning-distilled)"}


def render_tables(reports: Sequence[EvalReport]) -> str:
    """Aligned text tables: fix-type performance, reasoning quality, per-class F1, conditional accuracy."""
    parts = []
    parts.append("Fix-type prediction performance\n" + _table(
        ["Model", "Accuracy", "Macro F1"],
        [[LABELS.get(r.variant, r.variant), _fmt(r.accuracy), _fmt(r.macro_f1)] for r in reports],
    ))
    distilled = [r for r in reports if r.exact_match is not None]
    for r in distilled:
        parts.append("Reasoning prediction performance\n" + _table(
            ["Metric", "Value"],
            [["Reasoning Macro F1", _fmt(r.tag_macro_f1)],
             ["Reasoning Micro F1", _fmt(r.tag_micro_f1)],
             ["Exact Match Accuracy", _fmt(r.exact_match)]],
        ))
    present = [f.value for f in FIX_TYPES if reports[0].per_class_support.get(f.value, 0) > 0]
    parts.append("Per-fix-type F1 (fix types present in the split)\n" + _table(
        ["Fix Type"] + [LABELS.get(r.variant, r.variant) + " F1" for r in reports],
        [[f] + [_fmt(r.per_class_f1[f], 2) for r in reports] for f in present],
    ))
    for r in reports:
        if r.conditional is None:
            parts.append(f"Fix-type accuracy conditioned on reasoning trace correctness: not applicable ({r.variant})")
            continue
        c = r.conditional
        parts.append("Fix-type accuracy conditioned on reasoning trace correctness\n" + _table(
            ["Condition", "Fix-Type Accuracy", "n"],
            [["Correct reasoning trace", _fmt(c["acc_given_trace_correct"], 2), str(c["n_correct_trace"])],
             ["Incorrect reasoning trace", _fmt(c["acc_given_trace_incorrect"], 2), str(c["n_incorrect_trace"])]],
        ))
    return "\n\n".join(parts) + "\n"

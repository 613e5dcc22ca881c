"""Deterministic training of the student variants and the paired label-only vs. distilled experiment."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from symdistill import tinylearn as tl
from symdistill.config import TrainConfig, dump_kv
from symdistill.corpus.dataset import stratified_split
from symdistill.encode import Vocabulary, build_vocab, encode, oov_rate
from symdistill.metrics import EvalReport, render_tables, score_predictions
from symdistill.records import Dataset, Example
from symdistill.student import (
    StudentConfig,
    StudentModel,
    batch_loss,
    init_params,
    model_from_arrays,
    predict_batch,
    tag_indicator,
)

log = logging.getLogger(__name__)

SHUFFLE_SALT = 0x5EED_5EED


class UnsupervisedExample(ValueError):
    pass


@dataclass
class EncodedSplit:
    examples: list
    ids: np.ndarray
    lengths: np.ndarray
    fix: np.ndarray
    tags: np.ndarray
    traces: list

    def __len__(self) -> int:
        return len(self.examples)


def require_supervision(examples: Sequence[Example]) -> None:
    for e in examples:
        if e.supervision is None or not e.supervision.valid:
            raise UnsupervisedExample(f"example {e.id} has no valid teacher supervision")


def encode_split(examples: Sequence[Example], vocab: Vocabulary, max_len: int, use_teacher_labels: bool = True) -> EncodedSplit:
    seqs = [encode(e, vocab, max_len) for e in examples]
    ids = np.array([s.ids for s in seqs], dtype=np.int64).reshape(len(seqs), max_len)
    lengths = np.array([s.length for s in seqs], dtype=np.int64)
    fix, tags, traces = [], [], []
    for e in examples:
        sup = e.supervision
        label = sup.fix_type if (use_teacher_labels and sup is not None) else e.gold_fix_type
        fix.append(label.index)
        trace = tuple(sup.trace) if sup is not None else ()
        traces.append(trace)
        tags.append(tag_indicator(trace))
    return EncodedSplit(list(examples), ids, lengths, np.array(fix, dtype=np.int64),
                        np.array(tags, dtype=np.float64).reshape(len(examples), -1), traces)


def ensure_split(dataset: Dataset, ratio: float = 0.8, seed: int = 1) -> Dataset:
    if dataset.examples and all(e.split in ("train", "validation") for e in dataset.examples):
        return dataset
    return stratified_split(dataset, ratio, seed)


def student_config(config: TrainConfig, vocab_size: int) -> StudentConfig:
    return StudentConfig(
        vocab_size=vocab_size,
        embed_dim=config.embed_dim,
        hidden_dim=config.hidden_dim,
        lambda_reason=config.lambda_reason,
        variant=config.variant,
        tag_threshold=config.tag_threshold,
    )


def evaluate_encoded(model: StudentModel, data: EncodedSplit, split: str, set_semantics: bool = False,
                     oov: Optional[float] = None) -> EvalReport:
    preds = predict_batch(model, data.ids, data.lengths)
    gold_fix = [e.gold_fix_type.index for e in data.examples]
    return score_predictions(preds, gold_fix, data.traces, model.config.variant, split, set_semantics, oov)


@dataclass
class TrainResult:
    model: StudentModel
    log: list = field(default_factory=list)
    adam: Optional[tl.AdamState] = None
    vocab: Optional[Vocabulary] = None
    config: Optional[TrainConfig] = None


def train(model: StudentModel, dataset: Dataset, config: TrainConfig, vocab: Vocabulary) -> TrainResult:
    """``epochs`` passes of seeded-shuffle minibatch Adam; logs train loss and validation metrics per epoch."""
    train_ex = dataset.split("train")
    require_supervision(train_ex)
    if model.config.vocab_size != len(vocab):
        raise tl.ShapeMismatch("model vocabulary size does not match the vocabulary")
    data = encode_split(train_ex, vocab, config.max_len)
    val_ex = dataset.split("validation")
    val = encode_split(val_ex, vocab, config.max_len) if val_ex else None

    state = tl.AdamState(lr=config.lr)
    rng = tl.SplitMix64(config.seed ^ SHUFFLE_SALT)
    distilled = model.config.variant == "reasoning_distilled"
    entries = []
    n = len(data)
    for epoch in range(1, config.epochs + 1):
        order = np.array(rng.permutation(n), dtype=np.int64)
        losses = []
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            loss = batch_loss(model, data.ids[idx], data.lengths[idx], data.fix[idx], data.tags[idx] if distilled else None)
            grads = tl.backward(loss, model.params)
            tl.adam_step(model.params, grads, state)
            losses.append(loss.item())
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val is not None:
            rep = evaluate_encoded(model, val, "validation", config.set_semantics)
            entry.update(val_accuracy=rep.accuracy, val_macro_f1=rep.macro_f1)
            if rep.exact_match is not None:
                entry.update(val_tag_micro_f1=rep.tag_micro_f1, val_exact_match=rep.exact_match)
        entries.append(entry)
        log.debug("epoch %d %s", epoch, entry)
    return TrainResult(model, entries, state, vocab, config)


def fit(dataset: Dataset, config: TrainConfig) -> TrainResult:
    """Build the vocabulary from the train split, initialise from ``config.seed`` and train."""
    vocab = build_vocab(dataset.split("train"), config.min_count)
    model = init_params(student_config(config, len(vocab)), config.seed)
    return train(model, dataset, config, vocab)


def evaluate_result(result: TrainResult, dataset: Dataset, split: str = "validation") -> EvalReport:
    examples = dataset.split(split)
    data = encode_split(examples, result.vocab, result.config.max_len)
    return evaluate_encoded(result.model, data, split, result.config.set_semantics, oov_rate(examples, result.vocab))


# --- checkpoints -----------------------------------------------------------

def save_student(path, result: TrainResult) -> None:
    header = {
        "kind": "student",
        "student_config": result.model.config.to_json(),
        "train_config": result.config.to_json(),
        "vocab": list(result.vocab.tokens),
    }
    tl.save_checkpoint(path, result.model.params, result.adam, header)


def load_student(path) -> TrainResult:
    arrays, state, header = tl.load_checkpoint(path)
    if header.get("kind") != "student":
        raise ValueError(f"{path} is not a student checkpoint")
    cfg = StudentConfig(**header["student_config"])
    model = model_from_arrays(cfg, arrays)
    return TrainResult(model, [], state, Vocabulary(header["vocab"]), TrainConfig(**header["train_config"]))


# --- paired experiment ------------------------------------------------------

@dataclass
class PairedReport:
    rows: list  # one dict per (seed, variant)
    means: dict  # variant -> {accuracy, macro_f1}
    difference: dict  # distilled minus label-only
    reports: dict  # "variant/seed" -> EvalReport

    def to_json(self) -> dict:
        return {
            "rows": self.rows,
            "means": self.means,
            "difference": self.difference,
            "reports": {k: r.to_json() for k, r in self.reports.items()},
        }

    def to_text(self) -> str:
        lines = [f"{'seed':>4}  {'variant':<22} {'accuracy':>8} {'macro_f1':>8}"]
        for r in self.rows:
            lines.append(f"{r['seed']:>4}  {r['variant']:<22} {r['accuracy']:>8.3f} {r['macro_f1']:>8.3f}")
        for v, m in self.means.items():
            lines.append(f"{'mean':>4}  {v:<22} {m['accuracy']:>8.3f} {m['macro_f1']:>8.3f}")
        d = self.difference
        lines.append(f"{'diff':>4}  {'distilled - label_only':<22} {d['accuracy']:>+8.3f} {d['macro_f1']:>+8.3f}")
        return "\n".join(lines) + "\n"


def paired_configs(base: TrainConfig, seed: int) -> dict:
    """The two conditions differ only in the variant (and therefore in whether the tag loss is on)."""
    return {
        "label_only": base.replace(seed=seed, variant="label_only"),
        "reasoning_distilled": base.replace(seed=seed, variant="reasoning_distilled"),
    }


def run_paired_experiment(dataset: Dataset, base_config: TrainConfig, seeds: Sequence[int],
                          run_dir: Optional[Path] = None) -> PairedReport:
    if not seeds:
        raise ValueError("need at least one seed")
    rows, reports = [], {}
    log_lines = []
    for seed in seeds:
        for variant, cfg in paired_configs(base_config, seed).items():
            result = fit(dataset, cfg)
            rep = evaluate_result(result, dataset)
            key = f"{variant}/seed{seed}"
            reports[key] = rep
            rows.append({"seed": seed, "variant": variant, "accuracy": rep.accuracy, "macro_f1": rep.macro_f1})
            for entry in result.log:
                log_lines.append(json.dumps({"run": key, **entry}))
            if run_dir is not None:
                ckpt = Path(run_dir) / "checkpoints" / f"{variant}-seed{seed}.json"
                ckpt.parent.mkdir(parents=True, exist_ok=True)
                save_student(ckpt, result)
    means = {}
    for variant in ("label_only", "reasoning_distilled"):
        sel = [r for r in rows if r["variant"] == variant]
        means[variant] = {
            "accuracy": float(np.mean([r["accuracy"] for r in sel])),
            "macro_f1": float(np.mean([r["macro_f1"] for r in sel])),
        }
    diff = {k: means["reasoning_distilled"][k] - means["label_only"][k] for k in ("accuracy", "macro_f1")}
    report = PairedReport(rows, means, diff, reports)
    if run_dir is not None:
        write_run(Path(run_dir), base_config, log_lines, report)
    return report


def write_run(run_dir: Path, config: TrainConfig, log_lines: list, report) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "checkpoints").mkdir(exist_ok=True)
    (run_dir / "config").write_text(dump_kv(config.to_json()), encoding="utf-8")
    (run_dir / "log.jsonl").write_text("".join(line + "\n" for line in log_lines), encoding="utf-8")
    (run_dir / "report.json").write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    text = report.to_text()
    if isinstance(report, PairedReport):
        text += "\n" + _paired_tables(report)
    (run_dir / "report.txt").write_text(text, encoding="utf-8")


def _paired_tables(report: PairedReport) -> str:
    first_seed = report.rows[0]["seed"]
    reps = [report.reports[f"{v}/seed{first_seed}"] for v in ("label_only", "reasoning_distilled")]
    return f"seed {first_seed}\n" + render_tables(reps)

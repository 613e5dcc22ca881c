"""Structured JSON distillation: defect label + unified diff + short explanation, decoded token by token.

The decoder reuses the student encoder (embedding, per-token dense layer, mean pool) and adds a
feed-forward autoregressive head that sees the pooled program representation and the previous
``context`` output tokens. It also sees three
features of the emitted prefix: how many string delimiters it has produced (which JSON field it
is in), how many lines it has written and its column within the current line. Its output
vocabulary is closed; per example, decoding is restricted to
a base set (JSON syntax, fix-type names, diff syntax, explanation words, numbers, whitespace runs)
plus the tokens occurring in that example's own buggy source.
"""

from __future__ import annotations

import dataclasses
import difflib
import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from symdistill import tinylearn as tl
from symdistill.corpus.dataset import three_way_split
from symdistill.encode import Vocabulary, build_vocab, encode
from symdistill.metrics import EmptySplit
from symdistill.records import Dataset, Example
from symdistill.student import StudentConfig, StudentModel, encode_batch, param_shapes
from symdistill.taxonomy import FIX_TYPES, FixType
from symdistill.teacher import MissingProvenance

KEYS = ("defect_class", "patch", "explanation")
PATCH_FROM, PATCH_TO = "a/program.c", "b/program.c"

EXPLANATIONS = {
    FixType.WRONG_CONDITION: "the branch condition compares the wrong way so the wrong branch runs",
    FixType.LOOP_BOUND: "the loop bound lets the loop run one step too many or too few",
    FixType.WRONG_OPERATOR: "an arithmetic or logical operator was swapped for a different one",
    FixType.INIT_ERROR: "a variable is read before it is given its initial value",
    FixType.MISSING_CASE: "a switch case is missing so that input falls through to another branch",
    FixType.OFF_BY_ONE_INDEX: "an array index is off by one from the intended element",
    FixType.WRONG_RETURN: "the function returns the wrong expression",
    FixType.IO_FORMAT: "the output format string does not match the expected output layout",
    FixType.WRONG_CONSTANT: "a numeric constant has the wrong value",
}


class ContextMismatch(ValueError):
    pass


class MalformedDiff(ValueError):
    pass


# --- targets ------------------------------------------------------------------

@dataclass(frozen=True)
class JsonTarget:
    defect_class: FixType
    patch: str
    explanation: str

    def to_json(self) -> dict:
        return {"defect_class": self.defect_class.value, "patch": self.patch, "explanation": self.explanation}

    def serialize(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def parse(cls, text: str) -> "JsonTarget":
        obj = json.loads(text)
        if not isinstance(obj, dict) or set(obj) != set(KEYS):
            raise ValueError("a target has exactly the keys defect_class, patch, explanation")
        if not all(isinstance(obj[k], str) for k in KEYS):
            raise ValueError("target fields are strings")
        return cls(FixType(obj["defect_class"]), obj["patch"], obj["explanation"])


def unified_diff(before: str, after: str, context: int = 1) -> str:
    lines = difflib.unified_diff(before.splitlines(), after.splitlines(), PATCH_FROM, PATCH_TO, n=context, lineterm="")
    return "".join(line + "\n" for line in lines)


def make_json_target(example: Example) -> JsonTarget:
    if example.provenance is None or example.provenance.edit is None:
        raise MissingProvenance(f"example {example.id} has no edit record")
    patch = unified_diff(example.buggy_source, example.reference_source)
    if patch.count("\n@@ ") + patch.startswith("@@ ") != 1:
        raise MalformedDiff(f"example {example.id}: edit does not form a single hunk")
    return JsonTarget(example.gold_fix_type, patch, EXPLANATIONS[example.gold_fix_type])


_HUNK = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


def apply_patch(source: str, diff: str) -> str:
    """Apply a single-hunk unified diff with exact context matching (no fuzz, no offset search)."""
    lines = diff.splitlines()
    if not any(line.strip() for line in lines):
        return source
    i = 0
    if i < len(lines) and lines[i].startswith("--- "):
        i += 1
        if i >= len(lines) or not lines[i].startswith("+++ "):
            raise MalformedDiff("'---' header without '+++' header")
        i += 1
    if i >= len(lines):
        raise MalformedDiff("no hunk")
    m = _HUNK.match(lines[i])
    if not m:
        raise MalformedDiff(f"bad hunk header {lines[i]!r}")
    old_start = int(m.group(1))
    old_len = 1 if m.group(2) is None else int(m.group(2))
    new_len = 1 if m.group(4) is None else int(m.group(4))
    old, new = [], []
    for line in lines[i + 1:]:
        if line.startswith("@@"):
            raise MalformedDiff("more than one hunk")
        if line.startswith("\\"):
            continue
        tag, text = line[:1], line[1:]
        if tag == " " or line == "":
            old.append(text)
            new.append(text)
        elif tag == "-":
            old.append(text)
        elif tag == "+":
            new.append(text)
        else:
            raise MalformedDiff(f"unexpected diff line {line!r}")
    if len(old) != old_len or len(new) != new_len:
        raise MalformedDiff("hunk line counts do not match its header")

    src = source.splitlines()
    start = old_start - 1 if old_len else old_start
    if start < 0 or src[start:start + old_len] != old:
        raise ContextMismatch(f"hunk does not match the source at line {old_start}")
    out = src[:start] + new + src[start + old_len:]
    text = "\n".join(out)
    if out and source.endswith("\n"):
        text += "\n"
    return text


# --- output tokens ---------------------------------------------------------------

_PIECE = re.compile(r"\\u[0-9a-fA-F]{4}|\\.|[ \t]+|\w+|.", re.S)
BOS, EOS, OUT_UNK = "<bos>", "<eos>", "<unk>"


def json_tokens(text: str) -> list[str]:
    """Split JSON text so that concatenating the pieces gives the text back."""
    return _PIECE.findall(text)


def _escaped(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)[1:-1]


def base_tokens() -> list[str]:
    skeleton = [JsonTarget(f, unified_diff("x\n", "y\n"), EXPLANATIONS[f]).serialize() for f in FIX_TYPES]
    out: list[str] = [BOS, EOS, OUT_UNK]
    for text in skeleton:
        out += json_tokens(text)
    out += [str(n) for n in range(0, 201)]
    out += [" " * n for n in range(1, 25)]
    out += list("+-@,{}[]():;\"")
    seen, ordered = set(), []
    for t in out:
        if t not in seen:
            seen.add(t)
            ordered.append(t)
    return ordered


def own_tokens(example: Example) -> set[str]:
    return set(json_tokens(_escaped(example.buggy_source)))


@dataclass
class OutputVocab:
    tokens: list
    base_count: int

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def mask(self, example: Example) -> np.ndarray:
        """Additive logit mask: 0 for allowed tokens, a large negative number elsewhere."""
        m = np.full(len(self.tokens), -1e9)
        m[: self.base_count] = 0.0
        for t in own_tokens(example):
            j = self.index.get(t)
            if j is not None:
                m[j] = 0.0
        m[self.index[BOS]] = -1e9
        return m

    def target_ids(self, example: Example, target: JsonTarget) -> list[int]:
        allowed = self.mask(example) == 0.0
        ids = []
        for t in json_tokens(target.serialize()) + [EOS]:
            j = self.index.get(t)
            ids.append(j if j is not None and allowed[j] else self.index[OUT_UNK])
        return ids

    def detokenize(self, ids: Sequence[int]) -> str:
        parts = []
        for j in ids:
            t = self.tokens[j]
            if t == EOS:
                break
            parts.append("�" if t == OUT_UNK else t)
        return "".join(parts)


def build_output_vocab(examples: Sequence[Example]) -> OutputVocab:
    base = base_tokens()
    known = set(base)
    extra = set()
    for e in examples:
        extra |= own_tokens(e) - known
    return OutputVocab(base + sorted(extra), len(base))


# --- decoder ---------------------------------------------------------------------

@dataclass(frozen=True)
class DecoderConfig:
    embed_dim: int = 64
    hidden_dim: int = 128
    out_embed_dim: int = 32
    context: int = 3
    max_output: int = 400
    max_len: int = 256
    epochs: int = 120
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 1
    train_size: int = 74

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class DecoderModel:
    config: DecoderConfig
    vocab: Vocabulary
    out_vocab: OutputVocab
    params: dict = field(default_factory=dict)

    def encoder(self) -> StudentModel:
        cfg = StudentConfig(vocab_size=len(self.vocab), embed_dim=self.config.embed_dim, hidden_dim=self.config.hidden_dim)
        return StudentModel(cfg, {k: self.params[k] for k in ("embedding", "enc_w", "enc_b")})


def init_decoder(config: DecoderConfig, vocab: Vocabulary, out_vocab: OutputVocab) -> DecoderModel:
    rng = tl.SplitMix64(config.seed)
    enc = param_shapes(StudentConfig(vocab_size=len(vocab), embed_dim=config.embed_dim, hidden_dim=config.hidden_dim))
    shapes = {k: enc[k] for k in ("embedding", "enc_w", "enc_b")}
    step_in = config.hidden_dim + (config.context + 3) * config.out_embed_dim
    shapes.update({
        "out_embedding": (len(out_vocab), config.out_embed_dim),
        "quote_embedding": (QUOTE_STATES, config.out_embed_dim),
        "line_embedding": (LINE_STATES, config.out_embed_dim),
        "col_embedding": (COL_STATES, config.out_embed_dim),
        "dec_w": (step_in, config.hidden_dim),
        "dec_b": (1, config.hidden_dim),
        "out_w": (config.hidden_dim, len(out_vocab)),
        "out_b": (1, len(out_vocab)),
    })
    params = {}
    for name, (r, c) in shapes.items():
        data = np.zeros((r, c)) if name.endswith("_b") else rng.uniform_array(r, c, -0.05, 0.05)
        params[name] = tl.parameter(data, name)
    return DecoderModel(config, vocab, out_vocab, params)


QUOTE_STATES, LINE_STATES, COL_STATES = 16, 16, 32


class PrefixState:
    """Running (delimiter count, line count, column) over emitted tokens, each capped."""

    __slots__ = ("quotes", "lines", "col")

    def __init__(self):
        self.quotes = self.lines = self.col = 0

    def features(self) -> tuple[int, int, int]:
        return min(self.quotes, QUOTE_STATES - 1), min(self.lines, LINE_STATES - 1), min(self.col, COL_STATES - 1)

    def push(self, token: str) -> None:
        if token == '"':
            self.quotes += 1
        if token == "\\n":
            self.lines += 1
            self.col = 0
        else:
            self.col += 1


def _contexts(targets: Sequence[Sequence[int]], out_vocab: "OutputVocab", k: int):
    """Teacher-forced rows: owner example, previous-k token ids, prefix features, next token id."""
    bos = out_vocab.index[BOS]
    owners, prev, feats, nxt = [], [], [], []
    for b, seq in enumerate(targets):
        hist = [bos] * k
        state = PrefixState()
        for t in seq:
            owners.append(b)
            prev.append(hist[-k:])
            feats.append(state.features())
            nxt.append(t)
            hist.append(t)
            state.push(out_vocab.tokens[t])
    return (np.array(owners, dtype=np.int64), np.array(prev, dtype=np.int64).reshape(-1, k),
            np.array(feats, dtype=np.int64).reshape(-1, 3), np.array(nxt, dtype=np.int64))


def _step_logits(model: DecoderModel, pooled: tl.Tensor, owners: np.ndarray, prev: np.ndarray, feats: np.ndarray,
                 masks: np.ndarray) -> tl.Tensor:
    p = model.params
    parts = [tl.embedding_lookup(pooled, owners)]
    for j in range(prev.shape[1]):
        parts.append(tl.embedding_lookup(p["out_embedding"], prev[:, j]))
    for j, name in enumerate(("quote_embedding", "line_embedding", "col_embedding")):
        parts.append(tl.embedding_lookup(p[name], feats[:, j]))
    h = tl.relu(tl.add_bias(tl.matmul(tl.concat_cols(parts), p["dec_w"]), p["dec_b"]))
    logits = tl.add_bias(tl.matmul(h, p["out_w"]), p["out_b"])
    return tl.add_const(logits, masks[owners])


def _encode_examples(model: DecoderModel, examples: Sequence[Example]) -> tuple[np.ndarray, np.ndarray]:
    seqs = [encode(e, model.vocab, model.config.max_len) for e in examples]
    ids = np.array([s.ids for s in seqs], dtype=np.int64).reshape(len(seqs), model.config.max_len)
    return ids, np.array([s.length for s in seqs], dtype=np.int64)


def decoder_loss(model: DecoderModel, examples: Sequence[Example], targets: Sequence[Sequence[int]]) -> tl.Tensor:
    ids, lengths = _encode_examples(model, examples)
    pooled = encode_batch(model.encoder(), ids, lengths)
    masks = np.stack([model.out_vocab.mask(e) for e in examples])
    owners, prev, feats, nxt = _contexts(targets, model.out_vocab, model.config.context)
    return tl.cross_entropy(_step_logits(model, pooled, owners, prev, feats, masks), nxt)


@dataclass
class DecoderResult:
    model: DecoderModel
    log: list


def train_decoder(train_examples: Sequence[Example], all_examples: Sequence[Example], config: DecoderConfig) -> DecoderResult:
    """Teacher-forced cross-entropy on the JSON targets of ``train_examples``.

    ``all_examples`` only widens the output vocabulary so that held-out programs' own tokens
    have output rows; their targets are never seen.
    """
    if not train_examples:
        raise EmptySplit("no training examples for the decoder")
    vocab = build_vocab(train_examples)
    model = init_decoder(config, vocab, build_output_vocab(all_examples))
    targets = [model.out_vocab.target_ids(e, make_json_target(e)) for e in train_examples]
    state = tl.AdamState(lr=config.lr)
    rng = tl.SplitMix64(config.seed ^ 0xDEC0DE)
    log = []
    n = len(train_examples)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            loss = decoder_loss(model, [train_examples[i] for i in idx], [targets[i] for i in idx])
            tl.adam_step(model.params, tl.backward(loss, model.params), state)
            losses.append(loss.item())
        log.append({"epoch": epoch, "train_loss": float(np.mean(losses))})
    return DecoderResult(model, log)


def decode(model: DecoderModel, examples: Sequence[Example]) -> list[str]:
    """Greedy, batched, deterministic decoding (ties go to the smallest token id)."""
    if not examples:
        return []
    ids, lengths = _encode_examples(model, examples)
    pooled = encode_batch(model.encoder(), ids, lengths)
    masks = np.stack([model.out_vocab.mask(e) for e in examples])
    k, bos, eos = model.config.context, model.out_vocab.index[BOS], model.out_vocab.index[EOS]
    hist = [[bos] * k for _ in examples]
    states = [PrefixState() for _ in examples]
    outputs: list[list[int]] = [[] for _ in examples]
    live = list(range(len(examples)))
    for _ in range(model.config.max_output):
        if not live:
            break
        owners = np.array(live, dtype=np.int64)
        prev = np.array([hist[b][-k:] for b in live], dtype=np.int64)
        feats = np.array([states[b].features() for b in live], dtype=np.int64)
        logits = _step_logits(model, pooled, owners, prev, feats, masks).data
        nxt = logits.argmax(axis=1)
        still = []
        for b, t in zip(live, nxt.tolist()):
            outputs[b].append(t)
            hist[b].append(t)
            states[b].push(model.out_vocab.tokens[t])
            if t != eos:
                still.append(b)
        live = still
    return [model.out_vocab.detokenize(o) for o in outputs]


# --- evaluation --------------------------------------------------------------------

@dataclass
class StructuredReport:
    split: str
    n_examples: int
    json_validity: float
    defect_exact_match: float
    defect_micro_f1: float  # over valid-JSON outputs
    defect_micro_f1_all: float  # invalid outputs count as misses
    patch_apply_rate: Optional[float]  # over valid outputs; None if none are valid

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def parse_output(text: str) -> Optional[dict]:
    try:
        obj = json.loads(text)
    except ValueError:
        return None
    if not isinstance(obj, dict) or set(obj) != set(KEYS):
        return None
    return obj


def score_outputs(outputs: Sequence[str], examples: Sequence[Example], split: str) -> StructuredReport:
    if not examples:
        raise EmptySplit(f"split {split!r} has no examples")
    valid = correct = applied = 0
    for text, e in zip(outputs, examples):
        obj = parse_output(text)
        if obj is None:
            continue
        valid += 1
        correct += obj["defect_class"] == e.gold_fix_type.value
        if not isinstance(obj["patch"], str):
            continue
        try:
            apply_patch(e.buggy_source, obj["patch"])
            applied += 1
        except (ContextMismatch, MalformedDiff):
            pass
    n = len(examples)
    wrong = valid - correct
    # single-label decisions: a wrong class is one FP and one FN; an invalid output is one FN
    micro_valid = correct / valid if valid else 0.0
    denom = 2 * correct + 2 * wrong + (n - valid)
    micro_all = 2 * correct / denom if denom else 0.0
    return StructuredReport(split, n, valid / n, correct / n, micro_valid, micro_all,
                            applied / valid if valid else None)


def evaluate_structured(model: DecoderModel, examples: Sequence[Example], split: str) -> StructuredReport:
    return score_outputs(decode(model, examples), examples, split)


@dataclass
class StructuredStudy:
    config: DecoderConfig
    train_ids: list
    reports: dict  # split -> StructuredReport
    log: list
    classifier_accuracy: dict = field(default_factory=dict)  # split -> fix-type accuracy of the classification student

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "train_ids": self.train_ids,
            "reports": {k: r.to_json() for k, r in self.reports.items()},
            "classifier_accuracy": self.classifier_accuracy,
            "log": self.log,
        }

    def to_text(self) -> str:
        rows = [["Split", "JSON Validity", "Exact Match", "Micro F1", "Classifier Acc"]]
        for name, r in self.reports.items():
            clf = self.classifier_accuracy.get(name)
            rows.append([name.capitalize(), f"{r.json_validity:.2f}", f"{r.defect_exact_match:.2f}", f"{r.defect_micro_f1:.2f}",
                         "n/a" if clf is None else f"{clf:.2f}"])
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        fmt = lambda r: " | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
        body = [fmt(rows[0]), "-+-".join("-" * w for w in widths)] + [fmt(r) for r in rows[1:]]
        return "Structured JSON distillation (low-data regime)\n" + "\n".join(body) + "\n"


def subsample(examples: Sequence[Example], size: int, seed: int) -> list[Example]:
    """Seeded subset of ``size`` examples, returned in id order."""
    ordered = sorted(examples, key=lambda e: e.id)
    if size >= len(ordered):
        return ordered
    pick = tl.SplitMix64(seed ^ 0x74).permutation(len(ordered))[:size]
    return sorted((ordered[i] for i in pick), key=lambda e: e.id)


def structured_split(dataset: Dataset, seed: int) -> Dataset:
    return three_way_split(dataset, (0.70, 0.15, 0.15), seed)


def run_structured_study(dataset: Dataset, config: DecoderConfig = DecoderConfig(),
                         classifier_config=None) -> StructuredStudy:
    """Three-way split, train the decoder on a small subsample of train, score validation and test.

    With ``classifier_config`` (a ``TrainConfig``), a classification student is also trained on the
    full train part of the same split and its fix-type accuracy reported next to the decoder's.
    """
    split = structured_split(dataset, config.seed)
    train = subsample(split.split("train"), config.train_size, config.seed)
    result = train_decoder(train, split.examples, config)
    names = ("validation", "test")
    reports = {name: evaluate_structured(result.model, split.split(name), name) for name in names}
    clf = {}
    if classifier_config is not None:
        from symdistill.trainer import evaluate_result, fit

        student = fit(split, classifier_config)
        clf = {name: evaluate_result(student, split, name).accuracy for name in names}
    return StructuredStudy(config, [e.id for e in train], reports, result.log, clf)

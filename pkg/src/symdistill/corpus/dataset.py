"""Stratified splitting and JSONL persistence of datasets."""

from __future__ import annotations

import dataclasses
import json
import math
from collections import defaultdict
from pathlib import Path

from symdistill.records import Dataset, Example
from symdistill.tinylearn import SplitMix64


class ClassTooSmall(ValueError):
    pass


class FormatError(ValueError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.line = line


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def _by_class(examples: list[Example]) -> dict:
    groups: dict = defaultdict(list)
    for e in examples:
        groups[e.gold_fix_type].append(e)
    return groups


def allocate_holdout(class_counts: dict, fraction: float, seed: int) -> dict:
    """Per-class held-out counts by largest remainder; ties broken by a seeded class order."""
    total = sum(class_counts.values())
    target = _round_half_up(total * fraction)
    quotas = {c: n * fraction for c, n in class_counts.items()}
    alloc = {c: min(int(math.floor(q + 1e-9)), class_counts[c]) for c, q in quotas.items()}
    classes = sorted(class_counts, key=lambda c: c.value)
    rng = SplitMix64(seed)
    tiebreak = {c: r for c, r in zip(classes, rng.permutation(len(classes)))}
    by_remainder = sorted(classes, key=lambda c: (-(quotas[c] - alloc[c]), tiebreak[c]))
    diff = target - sum(alloc.values())
    i = 0
    while diff > 0 and by_remainder:
        c = by_remainder[i % len(by_remainder)]
        if alloc[c] < class_counts[c]:
            alloc[c] += 1
            diff -= 1
        i += 1
    i = 0
    while diff < 0:
        c = by_remainder[::-1][i % len(by_remainder)]
        if alloc[c] > 0:
            alloc[c] -= 1
            diff += 1
        i += 1
    return alloc


def stratified_split(dataset: Dataset, ratio: float, seed: int) -> Dataset:
    """Assign ``train``/``validation`` so every class keeps ~``ratio`` of its examples in train."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    groups = _by_class(dataset.examples)
    small = sorted(c.value for c, g in groups.items() if len(g) < 2)
    if small:
        raise ClassTooSmall(f"classes with fewer than 2 examples: {', '.join(small)}")
    alloc = allocate_holdout({c: len(g) for c, g in groups.items()}, 1.0 - ratio, seed)
    assignment = {}
    for c in sorted(groups, key=lambda c: c.value):
        members = sorted(groups[c], key=lambda e: e.id)
        rng = SplitMix64(seed ^ (hash_name(c.value)))
        order = rng.permutation(len(members))
        held = {members[i].id for i in order[: alloc[c]]}
        for e in members:
            assignment[e.id] = "validation" if e.id in held else "train"
    examples = [dataclasses.replace(e, split=assignment[e.id]) for e in dataset.examples]
    return Dataset(examples, seed=seed, split_ratio=ratio)


def three_way_split(dataset: Dataset, fractions=(0.70, 0.15, 0.15), seed: int = 0) -> Dataset:
    """Stratified train/validation/test assignment (used by the structured-output study)."""
    groups = _by_class(dataset.examples)
    counts = {c: len(g) for c, g in groups.items()}
    val = allocate_holdout(counts, fractions[1], seed)
    test = allocate_holdout({c: counts[c] - val[c] for c in counts}, fractions[2] / (1 - fractions[1]), seed + 1)
    assignment = {}
    for c in sorted(groups, key=lambda c: c.value):
        members = sorted(groups[c], key=lambda e: e.id)
        order = SplitMix64(seed ^ hash_name(c.value)).permutation(len(members))
        for rank, i in enumerate(order):
            if rank < val[c]:
                split = "validation"
            elif rank < val[c] + test[c]:
                split = "test"
            else:
                split = "train"
            assignment[members[i].id] = split
    examples = [dataclasses.replace(e, split=assignment[e.id]) for e in dataset.examples]
    return Dataset(examples, seed=seed, split_ratio=fractions[0])


def hash_name(name: str) -> int:
    """Stable 64-bit FNV-1a of a string (Python's ``hash`` is salted per process)."""
    h = 0xCBF29CE484222325
    for b in name.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & ((1 << 64) - 1)
    return h


def _meta_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def save_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for e in dataset.examples:
            fh.write(json.dumps(e.to_json(), ensure_ascii=False) + "\n")
    meta = {"seed": dataset.seed, "split_ratio": dataset.split_ratio, "count": len(dataset.examples)}
    _meta_path(path).write_text(json.dumps(meta) + "\n", encoding="utf-8")


def load_dataset(path) -> Dataset:
    path = Path(path)
    examples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(raw, dict):
                raise FormatError(path, lineno, "expected a JSON object")
            try:
                examples.append(Example.from_json(raw))
            except KeyError as exc:
                raise FormatError(path, lineno, f"missing field {exc.args[0]!r}") from None
            except (ValueError, TypeError) as exc:
                raise FormatError(path, lineno, str(exc)) from None
    seed, ratio = 0, None
    meta = _meta_path(path)
    if meta.exists():
        m = json.loads(meta.read_text(encoding="utf-8"))
        seed, ratio = m.get("seed", 0), m.get("split_ratio")
    return Dataset(examples, seed=seed, split_ratio=ratio)

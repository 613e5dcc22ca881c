"""Record types that travel between pipeline stages, and their JSON forms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from symdistill.taxonomy import FixType

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class Behavior:
    input: str
    expected: str
    observed: str

    def to_json(self) -> dict:
        return {"input": self.input, "expected": self.expected, "observed": self.observed}

    @classmethod
    def from_json(cls, d) -> "Behavior":
        return cls(str(d["input"]), str(d["expected"]), str(d["observed"]))


@dataclass(frozen=True)
class InjectedEdit:
    site_id: str
    site_kind: str
    context: str
    start: int  # character offset of the edit in the buggy source
    before: str  # text in the reference source
    after: str  # text in the buggy source
    fix_type: FixType
    flags: tuple[str, ...] = ()

    def revert(self, buggy_source: str) -> str:
        end = self.start + len(self.after)
        if buggy_source[self.start:end] != self.after:
            raise ValueError(f"edit {self.site_id} does not match the buggy source")
        return buggy_source[: self.start] + self.before + buggy_source[end:]

    def to_json(self) -> dict:
        return {
            "site_id": self.site_id,
            "site_kind": self.site_kind,
            "context": self.context,
            "start": self.start,
            "before": self.before,
            "after": self.after,
            "fix_type": self.fix_type.value,
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, d) -> "InjectedEdit":
        return cls(
            d["site_id"], d["site_kind"], d["context"], int(d["start"]),
            d["before"], d["after"], FixType(d["fix_type"]), tuple(d.get("flags", ())),
        )


@dataclass(frozen=True)
class Provenance:
    template_id: str
    edit: InjectedEdit

    def to_json(self) -> dict:
        return {"template_id": self.template_id, "edit": self.edit.to_json()}

    @classmethod
    def from_json(cls, d) -> "Provenance":
        return cls(d["template_id"], InjectedEdit.from_json(d["edit"]))


@dataclass(frozen=True)
class TeacherSupervision:
    fix_type: FixType
    trace: tuple[str, ...]
    source: str = "oracle"  # oracle / llm
    valid: bool = True

    def to_json(self) -> dict:
        return {
            "fix_type": self.fix_type.value,
            "trace": list(self.trace),
            "source": self.source,
            "valid": self.valid,
        }

    @classmethod
    def from_json(cls, d) -> "TeacherSupervision":
        return cls(FixType(d["fix_type"]), tuple(d["trace"]), d.get("source", "oracle"), bool(d.get("valid", True)))


@dataclass(frozen=True)
class Example:
    id: str
    buggy_source: str
    reference_source: str
    failing_behavior: tuple[Behavior, ...]
    gold_fix_type: FixType
    supervision: Optional[TeacherSupervision] = None
    split: Optional[str] = None
    provenance: Optional[Provenance] = None

    def to_json(self) -> dict:
        # key order is part of the file format
        return {
            "id": self.id,
            "buggy_source": self.buggy_source,
            "reference_source": self.reference_source,
            "failing_behavior": [b.to_json() for b in self.failing_behavior],
            "gold_fix_type": self.gold_fix_type.value,
            "supervision": None if self.supervision is None else self.supervision.to_json(),
            "split": self.split,
            "provenance": None if self.provenance is None else self.provenance.to_json(),
        }

    @classmethod
    def from_json(cls, d) -> "Example":
        sup = d.get("supervision")
        prov = d.get("provenance")
        split = d.get("split")
        if split is not None and split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return cls(
            id=str(d["id"]),
            buggy_source=d["buggy_source"],
            reference_source=d["reference_source"],
            failing_behavior=tuple(Behavior.from_json(b) for b in d["failing_behavior"]),
            gold_fix_type=FixType(d["gold_fix_type"]),
            supervision=None if sup is None else TeacherSupervision.from_json(sup),
            split=split,
            provenance=None if prov is None else Provenance.from_json(prov),
        )


@dataclass
class Dataset:
    examples: list[Example] = field(default_factory=list)
    seed: int = 0
    split_ratio: Optional[float] = None

    def __len__(self) -> int:
        return len(self.examples)

    def split(self, name: str) -> list[Example]:
        return [e for e in self.examples if e.split == name]

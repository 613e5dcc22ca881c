"""Closed label sets shared by every stage: the 9 fix types and the reasoning tag vocabulary."""

from __future__ import annotations

import enum


class FixType(str, enum.Enum):
    WRONG_CONDITION = "WRONG_CONDITION"
    LOOP_BOUND = "LOOP_BOUND"
    WRONG_OPERATOR = "WRONG_OPERATOR"
    INIT_ERROR = "INIT_ERROR"
    MISSING_CASE = "MISSING_CASE"
    OFF_BY_ONE_INDEX = "OFF_BY_ONE_INDEX"
    WRONG_RETURN = "WRONG_RETURN"
    IO_FORMAT = "IO_FORMAT"
    WRONG_CONSTANT = "WRONG_CONSTANT"

    @property
    def index(self) -> int:
        return FIX_TYPES.index(self)

    @classmethod
    def from_index(cls, i: int) -> "FixType":
        return FIX_TYPES[i]


FIX_TYPES: tuple[FixType, ...] = tuple(FixType)
NUM_FIX_TYPES = len(FIX_TYPES)

# Canonical order: a predicted or oracle trace is always listed in this order.
TAGS: tuple[str, ...] = (
    "LOOP_BOUND_ERROR",
    "CMP_ERROR",
    "MISSING_BRANCH",
    "INDEX_ERROR",
    "RETURN_ERROR",
    "IO_ERROR",
    "INIT_UNSET",
    "OP_SUBSTITUTION",
    "CONST_ERROR",
)
NUM_TAGS = len(TAGS)
TAG_INDEX = {t: i for i, t in enumerate(TAGS)}
MAX_TRACE_LEN = 4

# Which kind of edit site can host which fix type.
SITE_KINDS: tuple[str, ...] = (
    "comparison",
    "loop-bound",
    "binary-operator",
    "initialization",
    "switch-case",
    "array-index",
    "return-expr",
    "io-format",
    "constant",
)

SITE_KIND_FOR_FIX = {
    FixType.WRONG_CONDITION: "comparison",
    FixType.LOOP_BOUND: "loop-bound",
    FixType.WRONG_OPERATOR: "binary-operator",
    FixType.INIT_ERROR: "initialization",
    FixType.MISSING_CASE: "switch-case",
    FixType.OFF_BY_ONE_INDEX: "array-index",
    FixType.WRONG_RETURN: "return-expr",
    FixType.IO_FORMAT: "io-format",
    FixType.WRONG_CONSTANT: "constant",
}


def canonical_trace(tags) -> list[str]:
    """Sort a tag collection into vocabulary order, dropping duplicates."""
    return sorted(set(tags), key=TAG_INDEX.__getitem__)

"""Teacher supervision: fix-type label plus symbolic reasoning trace for each example.

Two sources produce the same record. The oracle expands the injected edit through a
fixed rule table; the LLM route queries a frozen model endpoint. Both pass through
``validate_supervision`` and anything that fails is dropped from the dataset.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import re
import time
import urllib.error
import urllib.request
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Callable, Optional, Union

from symdistill.encode import behavior_text
from symdistill.records import Dataset, Example, TeacherSupervision
from symdistill.taxonomy import FIX_TYPES, MAX_TRACE_LEN, TAGS, FixType, canonical_trace

log = logging.getLogger(__name__)

REJECTION_REASONS = ("UnknownFixType", "UnknownTag", "EmptyTrace", "DuplicateTag", "TraceTooLong")
PARSE_ERROR = "ParseError"
COMPARATORS = {"<", ">", "<=", ">=", "==", "!="}
TOKEN_ENV = "SYMDISTILL_TEACHER_TOKEN"


class MissingProvenance(ValueError):
    pass


class TransportError(ConnectionError):
    pass


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class Rejected:
    reason: str
    detail: str = ""
    valid: bool = False


Verdict = Union[TeacherSupervision, Rejected]


# --- oracle ----------------------------------------------------------------

@lru_cache(maxsize=None)
def rule_table() -> dict:
    text = resources.files("symdistill.data").joinpath("tag_rules.json").read_text(encoding="utf-8")
    table = json.loads(text)
    table["by_key"] = {(r["fix_type"], r["site_kind"]): r for r in table["rules"]}
    return table


def _holds(predicate: str, edit) -> bool:
    if predicate == "comparator":
        return edit.before.strip() in COMPARATORS or edit.after.strip() in COMPARATORS
    if predicate == "literal_replacement":
        return re.fullmatch(r"-?\d+", edit.after.strip()) is not None
    kind, _, value = predicate.partition(":")
    if kind == "context":
        return edit.context == value
    if kind == "flag":
        return value in edit.flags
    raise ValueError(f"unknown rule predicate {predicate!r}")


def expand_tags(edit) -> tuple[str, ...]:
    """Tags for one edit: the rule's base tags, its conditional additions, and the site-context
    tag when the rule asks for it; returned in canonical order."""
    table = rule_table()
    rule = table["by_key"].get((edit.fix_type.value, edit.site_kind))
    if rule is None:
        raise MissingProvenance(f"no rule for {edit.fix_type.value} at a {edit.site_kind} site")
    tags = list(rule["tags"])
    for cond in rule.get("when", []):
        if _holds(cond["if"], edit):
            tags.extend(cond["add"])
    if rule.get("context_tags") and edit.context in table["context_tags"]:
        tags.append(table["context_tags"][edit.context])
    return tuple(canonical_trace(tags))


def oracle_supervise(example: Example) -> TeacherSupervision:
    if example.provenance is None:
        raise MissingProvenance(f"example {example.id} carries no edit record")
    edit = example.provenance.edit
    return TeacherSupervision(example.gold_fix_type, expand_tags(edit), "oracle", True)


# --- validation ------------------------------------------------------------

def validate_supervision(raw, source: str = "llm") -> Verdict:
    """Check a raw ``{"fix_type": ..., "trace": [...]}`` record against the closed schema. Never raises."""
    if not isinstance(raw, dict):
        return Rejected("UnknownFixType", "record is not an object")
    fix = raw.get("fix_type")
    if not isinstance(fix, str) or fix not in FixType.__members__:
        return Rejected("UnknownFixType", repr(fix))
    trace = raw.get("trace")
    if not isinstance(trace, (list, tuple)) or not trace:
        return Rejected("EmptyTrace")
    unknown = [t for t in trace if not isinstance(t, str) or t not in TAGS]
    if unknown:
        return Rejected("UnknownTag", ", ".join(map(str, unknown)))
    if len(set(trace)) != len(trace):
        return Rejected("DuplicateTag")
    if len(trace) > MAX_TRACE_LEN:
        return Rejected("TraceTooLong", str(len(trace)))
    return TeacherSupervision(FixType(fix), tuple(trace), source, True)


# --- LLM endpoint ----------------------------------------------------------

@dataclass
class TeacherEndpointConfig:
    url: str
    model: str = "teacher"
    temperature: float = 0.0
    token_env: str = TOKEN_ENV
    timeout: float = 30.0
    backoff: tuple = (1.0, 2.0, 4.0)  # one retry per entry
    max_concurrency: int = 4


PROMPT_TEMPLATE = """You are assisting with automated program repair.
Example id: {id}
The C program below contains exactly one bug.

{source}
Observed incorrect behaviour:
{behavior}

Classify the fix type as one of: {fix_types}.
Give a reasoning trace of 1 to {max_len} distinct tags from: {tags}.
Answer with a single JSON object and nothing else:
{{"fix_type": "<FIX_TYPE>", "trace": ["<TAG>", ...]}}
"""


def render_prompt(example: Example) -> str:
    return PROMPT_TEMPLATE.format(
        id=example.id,
        source=example.buggy_source,
        behavior=behavior_text(example.failing_behavior),
        fix_types=", ".join(f.value for f in FIX_TYPES),
        max_len=MAX_TRACE_LEN,
        tags=", ".join(TAGS),
    )


def _post_json(url: str, body: dict, token: Optional[str], timeout: float) -> dict:
    data = json.dumps(body).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    req = urllib.request.Request(url, data=data, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            payload = resp.read()
    except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
        raise TransportError(f"{url}: {exc}") from exc
    try:
        return json.loads(payload)
    except json.JSONDecodeError as exc:
        raise TransportError(f"{url}: response body is not JSON") from exc


def query_teacher(prompt: str, endpoint: TeacherEndpointConfig, post: Callable = _post_json,
                  sleep: Callable[[float], None] = time.sleep) -> str:
    body = {"model": endpoint.model, "prompt": prompt, "temperature": endpoint.temperature}
    token = os.environ.get(endpoint.token_env)
    delays = list(endpoint.backoff)
    while True:
        try:
            reply = post(endpoint.url, body, token, endpoint.timeout)
            text = reply.get("text") if isinstance(reply, dict) else None
            if not isinstance(text, str):
                raise TransportError("reply has no 'text' field")
            return text
        except TransportError as exc:
            if not delays:
                raise
            delay = delays.pop(0)
            log.warning("teacher request failed (%s); retrying in %.0fs", exc, delay)
            sleep(delay)


def parse_response(text: str) -> dict:
    body = text.strip()
    fence = re.fullmatch(r"```(?:json)?\s*(.*?)\s*```", body, flags=re.S)
    if fence:
        body = fence.group(1)
    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ParseError(f"teacher reply is not JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ParseError("teacher reply is not a JSON object")
    return obj


def llm_supervise(example: Example, endpoint: TeacherEndpointConfig, post: Callable = _post_json,
                  sleep: Callable[[float], None] = time.sleep) -> Verdict:
    text = query_teacher(render_prompt(example), endpoint, post, sleep)
    try:
        raw = parse_response(text)
    except ParseError as exc:
        return Rejected(PARSE_ERROR, str(exc))
    return validate_supervision(raw, source="llm")


# --- dataset-level ---------------------------------------------------------

@dataclass
class FilterReport:
    total: int = 0
    retained: int = 0
    rejected: dict = field(default_factory=dict)
    rejected_ids: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "retained": self.retained,
            "rejected": dict(sorted(self.rejected.items())),
            "rejected_ids": list(self.rejected_ids),
        }


def supervise_dataset(dataset: Dataset, mode: str = "oracle", config: Optional[TeacherEndpointConfig] = None,
                      post: Callable = _post_json, sleep: Callable[[float], None] = time.sleep) -> tuple[Dataset, FilterReport]:
    """Attach teacher supervision; examples whose supervision fails validation are dropped."""
    examples = dataset.examples
    if mode == "oracle":
        verdicts = [oracle_supervise(e) for e in examples]
    elif mode == "llm":
        if config is None:
            raise ValueError("llm mode needs an endpoint config")
        with ThreadPoolExecutor(max_workers=max(1, config.max_concurrency)) as pool:
            verdicts = list(pool.map(lambda e: llm_supervise(e, config, post, sleep), examples))
    else:
        raise ValueError(f"unknown teacher mode {mode!r}")

    kept, reasons, rejected_ids = [], Counter(), []
    for e, v in zip(examples, verdicts):
        if v.valid:
            kept.append(dataclasses.replace(e, supervision=v))
        else:
            reasons[v.reason] += 1
            rejected_ids.append(e.id)
    report = FilterReport(len(examples), len(kept), dict(reasons), rejected_ids)
    return Dataset(kept, seed=dataset.seed, split_ratio=dataset.split_ratio), report

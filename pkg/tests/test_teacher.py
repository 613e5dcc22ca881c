import dataclasses
import json
from collections import Counter
from importlib import resources

import pytest
from hypothesis import given, strategies as st

from symdistill.corpus import inject_bug
from symdistill.records import Dataset
from symdistill.stub_teacher import DEFECTS, StubTeacher, oracle_responder
from symdistill.taxonomy import FIX_TYPES, MAX_TRACE_LEN, TAGS, FixType, canonical_trace
from symdistill.teacher import (
    REJECTION_REASONS,
    MissingProvenance,
    Rejected,
    TeacherEndpointConfig,
    TransportError,
    llm_supervise,
    oracle_supervise,
    query_teacher,
    render_prompt,
    supervise_dataset,
    validate_supervision,
)
from symdistill.records import TeacherSupervision


def by_id(templates, name):
    return next(t for t in templates if t.id == name)


def raw_rules():
    return json.loads(resources.files("symdistill.data").joinpath("tag_rules.json").read_text())


# --- oracle ---------------------------------------------------------------------------

def test_loop_bound_comparator_edit(templates):
    ex = inject_bug(by_id(templates, "fibonacci"), FixType.LOOP_BOUND, 7)
    assert (ex.provenance.edit.before, ex.provenance.edit.after) == ("<", "<=")
    assert "indexes_array" not in ex.provenance.edit.flags
    # read off the shipped table: base LOOP_BOUND_ERROR, plus CMP_ERROR because "<=" is a comparator
    rule = next(r for r in raw_rules()["rules"] if r["fix_type"] == "LOOP_BOUND")
    assert rule["tags"] == ["LOOP_BOUND_ERROR"]
    assert {"if": "comparator", "add": ["CMP_ERROR"]} in rule["when"]
    sup = oracle_supervise(ex)
    assert sup == TeacherSupervision(FixType.LOOP_BOUND, ("LOOP_BOUND_ERROR", "CMP_ERROR"), "oracle", True)


def test_loop_bound_over_array_adds_index_tag(templates):
    ex = inject_bug(by_id(templates, "smallest"), FixType.LOOP_BOUND, 7)
    assert oracle_supervise(ex).trace == ("LOOP_BOUND_ERROR", "CMP_ERROR", "INDEX_ERROR")


def test_removed_initializer(small_corpus):
    ex = next(e for e in small_corpus.examples if e.gold_fix_type is FixType.INIT_ERROR)
    assert ex.provenance.edit.after == ""
    assert "=" in ex.provenance.edit.before
    assert oracle_supervise(ex) == TeacherSupervision(FixType.INIT_ERROR, ("INIT_UNSET",), "oracle", True)


def test_no_provenance(small_corpus):
    bare = dataclasses.replace(small_corpus.examples[0], provenance=None)
    with pytest.raises(MissingProvenance):
        oracle_supervise(bare)


def test_oracle_on_full_corpus(full_corpus):
    supervised, report = supervise_dataset(full_corpus)
    assert (report.total, report.retained, report.rejected) == (288, 288, {})
    for before, after in zip(full_corpus.examples, supervised.examples):
        sup = after.supervision
        assert sup.fix_type is before.gold_fix_type
        assert 1 <= len(sup.trace) <= MAX_TRACE_LEN
        assert list(sup.trace) == canonical_trace(sup.trace)
        assert dataclasses.replace(after, supervision=None) == before
        assert oracle_supervise(before) == sup


def test_every_fix_type_has_a_rule():
    keys = {r["fix_type"] for r in raw_rules()["rules"]}
    assert keys == {f.value for f in FIX_TYPES}


# --- validation ----------------------------------------------------------------------------

CASES = [
    ({"fix_type": "WRONG_CONDITION", "trace": ["CMP_ERROR", "MISSING_BRANCH"]}, None),
    ({"fix_type": "WRONG_OPERATOR", "trace": ["OP_SUBSTITUTION"]}, None),
    ({"fix_type": "LOOP_BOUND", "trace": list(TAGS[:4])}, None),
    ({"fix_type": "WRONG_CONDITION", "trace": []}, "EmptyTrace"),
    ({"fix_type": "WRONG_CONDITION"}, "EmptyTrace"),
    ({"fix_type": "WRONG_CONDITION", "trace": "CMP_ERROR"}, "EmptyTrace"),
    ({"fix_type": "WRONG_CONDITION", "trace": ["CMP_ERROR", "CMP_ERROR"]}, "DuplicateTag"),
    ({"fix_type": "WRONG_CONDITION", "trace": ["CMP_ERROR", "STYLE_ISSUE"]}, "UnknownTag"),
    ({"fix_type": "WRONG_CONDITION", "trace": ["cmp_error"]}, "UnknownTag"),
    ({"fix_type": "WRONG_CONDITION", "trace": [3]}, "UnknownTag"),
    ({"fix_type": "LOOP_BOUND", "trace": list(TAGS[:5])}, "TraceTooLong"),
    ({"fix_type": "STYLE_FIX", "trace": ["CMP_ERROR"]}, "UnknownFixType"),
    ({"fix_type": "wrong_condition", "trace": ["CMP_ERROR"]}, "UnknownFixType"),
    ({"fix_type": None, "trace": ["CMP_ERROR"]}, "UnknownFixType"),
    ({"trace": ["CMP_ERROR"]}, "UnknownFixType"),
    (["WRONG_CONDITION", ["CMP_ERROR"]], "UnknownFixType"),
    (None, "UnknownFixType"),
]


@pytest.mark.parametrize("raw,reason", CASES)
def test_case_matrix(raw, reason):
    verdict = validate_supervision(raw)
    if reason is None:
        assert isinstance(verdict, TeacherSupervision) and verdict.valid
        assert verdict.trace == tuple(raw["trace"])
    else:
        assert isinstance(verdict, Rejected) and not verdict.valid
        assert verdict.reason == reason


def test_case_matrix_covers_every_reason():
    assert {r for _, r in CASES if r} == set(REJECTION_REASONS)


json_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text(max_size=12) | st.sampled_from(TAGS + tuple(f.value for f in FIX_TYPES)),
    lambda inner: st.lists(inner, max_size=6) | st.dictionaries(st.sampled_from(["fix_type", "trace", "x"]), inner, max_size=3),
    max_leaves=12,
)


@given(json_values)
def test_validation_is_total(raw):
    verdict = validate_supervision(raw)
    ok = (
        isinstance(raw, dict)
        and isinstance(raw.get("fix_type"), str) and raw["fix_type"] in FixType.__members__
        and isinstance(raw.get("trace"), (list, tuple))
        and 0 < len(raw["trace"]) <= MAX_TRACE_LEN
        and all(isinstance(t, str) and t in TAGS for t in raw["trace"])
        and len(set(raw["trace"])) == len(raw["trace"])
    )
    assert verdict.valid == ok
    if not ok:
        assert verdict.reason in REJECTION_REASONS


# --- LLM route -----------------------------------------------------------------------------

ENDPOINT = TeacherEndpointConfig(url="http://teacher.invalid/v1", backoff=(1.0, 2.0, 4.0))


def replying(text):
    calls = []

    def post(url, body, token, timeout):
        calls.append(body)
        return {"text": text}

    post.calls = calls
    return post


def test_well_formed_reply(small_corpus):
    post = replying('{"fix_type":"WRONG_OPERATOR","trace":["OP_SUBSTITUTION"]}')
    verdict = llm_supervise(small_corpus.examples[0], ENDPOINT, post)
    assert verdict == TeacherSupervision(FixType.WRONG_OPERATOR, ("OP_SUBSTITUTION",), "llm", True)
    body = post.calls[0]
    assert body["temperature"] == 0.0 and body["model"] == "teacher"
    assert small_corpus.examples[0].buggy_source in body["prompt"]


def test_fenced_reply_is_accepted(small_corpus):
    post = replying('```json\n{"fix_type":"IO_FORMAT","trace":["IO_ERROR"]}\n```')
    assert llm_supervise(small_corpus.examples[0], ENDPOINT, post).valid


def test_unknown_tag_reply(small_corpus):
    post = replying('{"fix_type":"WRONG_OPERATOR","trace":["STYLE_ISSUE"]}')
    verdict = llm_supervise(small_corpus.examples[0], ENDPOINT, post)
    assert not verdict.valid and verdict.reason == "UnknownTag"


def test_truncated_reply(small_corpus):
    post = replying('{"fix_type":"WRONG_OPERATOR","trace":["OP_SUB')
    verdict = llm_supervise(small_corpus.examples[0], ENDPOINT, post)
    assert not verdict.valid and verdict.reason == "ParseError"


def test_prompt_names_the_example_and_vocabularies(small_corpus):
    ex = small_corpus.examples[5]
    prompt = render_prompt(ex)
    assert f"Example id: {ex.id}" in prompt
    assert all(t in prompt for t in TAGS)
    assert all(f.value in prompt for f in FIX_TYPES)


def test_transport_retries_follow_fixed_schedule():
    failures = [3]
    sleeps = []

    def post(url, body, token, timeout):
        if failures[0]:
            failures[0] -= 1
            raise TransportError("unreachable")
        return {"text": "ok"}

    assert query_teacher("p", ENDPOINT, post, sleeps.append) == "ok"
    assert sleeps == [1.0, 2.0, 4.0]


def test_transport_error_after_budget():
    sleeps = []

    def post(url, body, token, timeout):
        raise TransportError("down")

    with pytest.raises(TransportError):
        query_teacher("p", ENDPOINT, post, sleeps.append)
    assert sleeps == [1.0, 2.0, 4.0]


def test_reply_without_text_is_a_transport_error():
    def post(url, body, token, timeout):
        return {"choices": []}

    with pytest.raises(TransportError):
        query_teacher("p", ENDPOINT.__class__(url="x", backoff=()), post, lambda s: None)


def test_token_comes_from_environment(monkeypatch):
    seen = []

    def post(url, body, token, timeout):
        seen.append(token)
        return {"text": "x"}

    monkeypatch.setenv(ENDPOINT.token_env, "s3cret")
    query_teacher("p", ENDPOINT, post, lambda s: None)
    monkeypatch.delenv(ENDPOINT.token_env)
    query_teacher("p", ENDPOINT, post, lambda s: None)
    assert seen == ["s3cret", None]


# --- dataset filtering against the stub server ----------------------------------------------

def inject_defects(dataset, counts):
    ids = [e.id for e in dataset.examples]
    defects, i = {}, 0
    for name, n in counts.items():
        for _ in range(n):
            defects[ids[i]] = name
            i += 1
    return defects


def test_filter_report_counts_match_injected_defects(small_corpus):
    counts = {"truncated": 4, "unknown_fix_type": 3, "unknown_tag": 2, "empty_trace": 5, "duplicate_tag": 1, "too_long": 2}
    defects = inject_defects(small_corpus, counts)
    with StubTeacher(oracle_responder(small_corpus, defects)) as stub:
        supervised, report = supervise_dataset(small_corpus, "llm", TeacherEndpointConfig(url=stub.url))
    expected = Counter({DEFECTS[name]: n for name, n in counts.items()})
    assert report.rejected == dict(expected)
    assert report.total == len(small_corpus)
    assert report.retained == len(small_corpus) - sum(counts.values())
    assert sorted(report.rejected_ids) == sorted(defects)
    kept = {e.id for e in supervised.examples}
    assert kept.isdisjoint(defects)
    assert all(e.supervision.source == "llm" and e.supervision.valid for e in supervised.examples)


def test_ten_percent_malformed(full_corpus):
    subset = Dataset(full_corpus.examples[::3])
    n_bad = len(subset) // 10
    defects = inject_defects(subset, {"truncated": n_bad})
    with StubTeacher(oracle_responder(subset, defects)) as stub:
        _, report = supervise_dataset(subset, "llm", TeacherEndpointConfig(url=stub.url, max_concurrency=8))
    assert report.retained == len(subset) - n_bad
    assert report.rejected == {"ParseError": n_bad}


def test_stub_server_outage_is_retried(small_corpus):
    subset = Dataset(small_corpus.examples[:4])
    config = TeacherEndpointConfig(url="", backoff=(0.0, 0.0, 0.0), max_concurrency=1)
    with StubTeacher(oracle_responder(subset), fail_first=2) as stub:
        _, report = supervise_dataset(subset, "llm", dataclasses.replace(config, url=stub.url))
    assert report.retained == 4
    assert len(stub.requests) == 6


def test_llm_labels_match_oracle_when_stub_is_clean(small_corpus):
    with StubTeacher(oracle_responder(small_corpus)) as stub:
        supervised, _ = supervise_dataset(small_corpus, "llm", TeacherEndpointConfig(url=stub.url))
    for e in supervised.examples:
        oracle = oracle_supervise(e)
        assert (e.supervision.fix_type, e.supervision.trace) == (oracle.fix_type, oracle.trace)


def test_empty_dataset():
    supervised, report = supervise_dataset(Dataset([]))
    assert len(supervised) == 0 and report.total == 0 and report.retained == 0


def test_unknown_mode(small_corpus):
    with pytest.raises(ValueError):
        supervise_dataset(small_corpus, "crowd")

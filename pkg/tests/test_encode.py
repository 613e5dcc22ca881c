import dataclasses
import re

import pytest
from hypothesis import given, settings, strategies as st

from symdistill.encode import (
    PAD,
    SEP,
    UNK,
    EmptyTrainSplit,
    Vocabulary,
    behavior_tokens,
    build_vocab,
    encode,
    example_tokens,
    lex_c,
    oov_rate,
    text_tokens,
    verdict_tokens,
)
from symdistill.records import Behavior

# --- an independent regex lexer used as the reference -----------------------------------------

_OPS = sorted(["<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
               "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^="], key=len, reverse=True)
_REF = re.compile(
    r"(?P<skip>[ \t\r\f\v\n]+|//[^\n]*|/\*(?:.|\n)*?(?:\*/|$(?![\s\S])))"
    r"|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<num>(?:\d|\.\d)(?:[eE][+-]|[\w.])*)"
    r"|(?P<str>\"(?:\\.|[^\"\\\n])*(?:\"|\\$)?|'(?:\\.|[^'\\\n])*(?:'|\\$)?)"
    r"|(?P<op>" + "|".join(re.escape(o) for o in _OPS) + r")"
    r"|(?P<one>.)",
    re.S,
)


def reference_lex(source: str) -> list[str]:
    out, pos, line_start = [], 0, True
    while pos < len(source):
        if line_start:
            m = re.compile(r"[ \t\r\f\v]*#[^\n]*").match(source, pos)
            if m:
                out.append(m.group(0).strip())
                pos = m.end()
                continue
        m = _REF.match(source, pos)
        if m.lastgroup == "skip":
            if "\n" in m.group(0) and not m.group(0).startswith(("/*", "//")):
                line_start = True
                # resume just after the newline so leading blanks reach the directive check
                nl = m.group(0).rfind("\n")
                pos = pos + nl + 1
                continue
        else:
            out.append(m.group(0))
            line_start = False
        pos = m.end()
    return out


def test_maximal_munch():
    assert lex_c("if (a<=b) return 0;") == ["if", "(", "a", "<=", "b", ")", "return", "0", ";"]


def test_minus_literal():
    assert lex_c("x==-1") == ["x", "==", "-", "1"]
    assert reference_lex("x==-1") == ["x", "==", "-", "1"]


def test_empty():
    assert lex_c("") == []


def test_comments_and_directives():
    src = '#include <stdio.h>\nint x; // tail\n/* block\n */ y>>=2;\n  #define N 3\n'
    assert lex_c(src) == ["#include <stdio.h>", "int", "x", ";", "y", ">>=", "2", ";", "#define N 3"]


def test_string_and_char_literals():
    assert lex_c(r'printf("%d\n", c == ' + "'\\n');") == ["printf", "(", r'"%d\n"', ",", "c", "==", "'\\n'", ")", ";"]


def test_agrees_with_reference_on_corpus(templates, full_corpus):
    sources = [t.source for t in templates] + [e.buggy_source for e in full_corpus.examples]
    for src in sources:
        assert lex_c(src) == reference_lex(src)


@settings(max_examples=300)
@given(st.text(alphabet="ab_19 \n<>=!+-*/&|;(){}[].e", max_size=40))
def test_agrees_with_reference_on_fragments(src):
    assert lex_c(src) == reference_lex(src)


@given(st.text(max_size=60))
def test_lexer_is_total_and_loses_no_code(src):
    toks = lex_c(src)
    assert all(toks)
    if "/" not in src and "#" not in src:
        if not any(t[0] in "\"'" for t in toks):
            assert "".join(toks) == re.sub(r"[ \t\n\r\f\v]", "", src)


# --- behaviour tokens ------------------------------------------------------------------------

def test_text_tokens_mark_whitespace():
    assert text_tokens("sum of digits: 9\n") == ["sum", "<sp>", "of", "<sp>", "digits", ":", "<sp>", "9", "<nl>"]


@pytest.mark.parametrize("expected,observed,verdict", [
    ("2 of 3\n", 'prints "4195858 of 3\\n"', ["wrong_answer", "same_lines", "number_differs", "garbage_value"]),
    ("sum: 9\n", 'prints "sum: -9\\n"', ["wrong_answer", "same_lines", "number_differs", "negated"]),
    ("7\n", 'prints "8\\n"', ["wrong_answer", "same_lines", "number_differs", "off_by_one"]),
    ("7\n", 'prints "0\\n"', ["wrong_answer", "same_lines", "number_differs", "zero_value"]),
    ("7\n", 'prints "12\\n"', ["wrong_answer", "same_lines", "number_differs", "bigger"]),
    ("7\n", 'prints "3\\n"', ["wrong_answer", "same_lines", "number_differs", "smaller"]),
    ("Saturday\nweekend\n", 'prints "invalid day\\nweekend\\n"', ["wrong_answer", "same_lines", "text_differs"]),
    ("1\n2\n", 'prints "1\\n"', ["wrong_answer", "fewer_lines", "output_truncated"]),
    ("1\n", 'prints "1\\n2\\n"', ["wrong_answer", "more_lines", "output_extra"]),
    ("invalid month\n", 'prints "invalid month \\n"', ["presentation_error"]),
    ("5\n", "crash out_of_bounds", ["runtime_error", "out_of_bounds"]),
    ("5\n", "timeout", ["time_limit"]),
])
def test_verdicts(expected, observed, verdict):
    assert verdict_tokens(expected, observed) == ["verdict"] + verdict


def test_behavior_token_layout():
    b = Behavior("3 4", "7\n", 'prints "8\\n"')
    assert behavior_tokens([b]) == [
        "input", "3", "4", "expected", "7", "<nl>", "observed", "prints", "8", "<nl>",
        "verdict", "wrong_answer", "same_lines", "number_differs", "off_by_one",
    ]


# --- vocabulary ---------------------------------------------------------------------------

def test_vocab_order_and_min_count(small_dataset):
    train = small_dataset.split("train")
    counts = {}
    for e in train:
        prog, beh = example_tokens(e)
        for t in prog + beh:
            counts[t] = counts.get(t, 0) + 1
    vocab = build_vocab(train, min_count=2)
    expected = sorted((t for t, c in counts.items() if c >= 2), key=lambda t: (-counts[t], t))
    assert vocab.tokens == expected
    rare = next(t for t, c in counts.items() if c == 1)
    assert vocab.id(rare) == UNK
    assert len(build_vocab(train)) == len(counts) + 3


def test_tie_breaks_lexicographically(small_dataset):
    vocab = build_vocab(small_dataset.split("train"))
    counts = {}
    for e in small_dataset.split("train"):
        prog, beh = example_tokens(e)
        for t in prog + beh:
            counts[t] = counts.get(t, 0) + 1
    for a, b in zip(vocab.tokens, vocab.tokens[1:]):
        if counts[a] == counts[b]:
            assert a < b
            assert vocab.id(a) < vocab.id(b)


def test_reserved_ids():
    v = Vocabulary(["for"])
    assert (PAD, UNK, SEP) == (0, 1, 2)
    assert v.token(0) == "<pad>" and v.id("for") == 3 and v.id("while") == UNK


def test_vocab_serialization_is_stable(tmp_path, small_dataset):
    a = build_vocab(small_dataset.split("train"))
    b = build_vocab(list(small_dataset.split("train")))
    assert a.dumps() == b.dumps()
    a.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt") == a


def test_empty_train_split():
    with pytest.raises(EmptyTrainSplit):
        build_vocab([])


# --- encode -------------------------------------------------------------------------------

def test_layout_program_sep_behavior(small_dataset):
    ex = small_dataset.split("train")[0]
    vocab = build_vocab(small_dataset.split("train"))
    prog, beh = example_tokens(ex)
    seq = encode(ex, vocab, 512)
    ids = [vocab.id(t) for t in prog] + [SEP] + [vocab.id(t) for t in beh]
    assert len(ids) < 512
    assert seq.length == len(ids)
    assert list(seq.ids) == ids + [PAD] * (512 - len(ids))


def test_truncation_drops_the_tail(small_dataset):
    ex = small_dataset.split("train")[0]
    long = dataclasses.replace(ex, buggy_source="int x;\n" * 100)  # 300 program tokens
    vocab = build_vocab([long])
    seq = encode(long, vocab, 256)
    assert len(seq.ids) == 256 and seq.length == 256
    assert SEP not in seq.ids
    assert list(seq.ids) == [vocab.id(t) for t in ["int", "x", ";"] * 86][:256]


def test_short_input_is_padded():
    from symdistill.records import Example
    from symdistill.taxonomy import FixType

    ex = Example("t", "int x = 0 ; y", "", (Behavior("", "", "timeout"),), FixType.INIT_ERROR)
    prog, beh = example_tokens(ex)
    assert prog == ["int", "x", "=", "0", ";", "y"]
    assert beh == ["input", "expected", "observed", "timeout", "verdict", "time_limit"]
    seq = encode(ex, build_vocab([ex]), 256)
    assert seq.length == 13 and seq.ids[6] == SEP and seq.ids[13:] == (PAD,) * 243


def test_unknown_identifier_is_unk(small_dataset):
    ex = small_dataset.split("train")[0]
    vocab = build_vocab([ex])
    odd = dataclasses.replace(ex, buggy_source="int zzqq_never_seen;")
    assert encode(odd, vocab).ids[1] == UNK


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 400))
def test_encode_length_is_fixed(max_len):
    from symdistill.records import Example
    from symdistill.taxonomy import FixType

    ex = Example("t", "for (i = 0; i < n; i++) s += a[i];" * 5, "", (Behavior("1", "2\n", 'prints "3\\n"'),), FixType.LOOP_BOUND)
    vocab = build_vocab([ex])
    seq = encode(ex, vocab, max_len)
    assert len(seq.ids) == max_len
    assert all(i == PAD for i in seq.ids[seq.length:])
    assert PAD not in seq.ids[:seq.length]


def test_validation_oov_is_measured(full_dataset):
    vocab = build_vocab(full_dataset.split("train"))
    rate = oov_rate(full_dataset.split("validation"), vocab)
    assert 0.0 < rate < 0.2
    assert oov_rate(full_dataset.split("train"), vocab) == 0.0

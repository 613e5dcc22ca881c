"""C lexer, corpus vocabulary and fixed-length integer encoding of student inputs."""

from __future__ import annotations

import collections
import functools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

PAD, UNK, SEP = 0, 1, 2
RESERVED = ("<pad>", "<unk>", "<sep>")
VOCAB_HEADER = "# symdistill-vocab v1"
DEFAULT_MAX_LEN = 256

# Longest first: maximal munch picks the first match at each position.
OPERATORS = (
    "<<=", ">>=", "...",
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
)
PUNCT = set("+-*/%<>=!&|^~?:;,.()[]{}#")


class Token(NamedTuple):
    kind: str  # ident, number, string, char, op, directive, other
    text: str
    start: int
    end: int


class EmptyTrainSplit(ValueError):
    pass


def _is_ident_start(c: str) -> bool:
    return c.isalpha() or c == "_"


def scan(source: str) -> list[Token]:
    """Tokenize C source keeping character spans. Comments and whitespace are dropped."""
    toks: list[Token] = []
    i, n = 0, len(source)
    line_start = True
    while i < n:
        c = source[i]
        if c == "\n":
            line_start = True
            i += 1
            continue
        if c in " \t\r\f\v":
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            i = n if j < 0 else j + 2
            continue
        if c == "#" and line_start:
            # preprocessor line is one opaque token
            j = source.find("\n", i)
            j = n if j < 0 else j
            toks.append(Token("directive", source[i:j].rstrip(), i, j))
            i = j
            continue
        line_start = False
        if _is_ident_start(c):
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            toks.append(Token("ident", source[i:j], i, j))
            i = j
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] in "._"):
                # exponent sign: 1e-5
                j += 1
                if source[j - 1] in "eE" and j < n and source[j] in "+-" and not source[i:j].lower().startswith("0x"):
                    j += 1
            toks.append(Token("number", source[i:j], i, j))
            i = j
            continue
        if c in "\"'":
            j = i + 1
            while j < n and source[j] != c and source[j] != "\n":
                j += 2 if source[j] == "\\" else 1
            j = min(j + 1, n)
            toks.append(Token("string" if c == '"' else "char", source[i:j], i, j))
            i = j
            continue
        for op in OPERATORS:
            if source.startswith(op, i):
                toks.append(Token("op", op, i, i + len(op)))
                i += len(op)
                break
        else:
            toks.append(Token("op" if c in PUNCT else "other", c, i, i + 1))
            i += 1
    return toks


def lex_c(source: str) -> list[str]:
    return [t.text for t in scan(source)]


def behavior_text(failing_behavior) -> str:
    parts = []
    for b in failing_behavior:
        parts.append(f"input {b.input} expected {_quote(b.expected)} observed {b.observed}")
    return "\n".join(parts)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace("\n", "\\n").replace('"', '\\"') + '"'


_TEXT_PIECE = re.compile(r"\n| +|\t|[A-Za-z_]+|\d+|\S")


def text_tokens(text: str) -> list[str]:
    """Word-level pieces of program output; whitespace becomes explicit markers."""
    out = []
    for piece in _TEXT_PIECE.findall(text):
        if piece == "\n":
            out.append("<nl>")
        elif piece == "\t":
            out.append("<tab>")
        elif piece.startswith(" "):
            out.append("<sp>")
        else:
            out.append(piece)
    return out


def _observed_body(observed: str) -> str | None:
    if not observed.startswith("prints "):
        return None
    body = observed[len("prints "):]
    if len(body) >= 2 and body[0] == body[-1] == '"':
        body = _unquote(body[1:-1])
    return body


def _observed_tokens(observed: str) -> list[str]:
    body = _observed_body(observed)
    if body is None:
        return observed.split()
    return ["prints"] + text_tokens(body)


def _number(word: str):
    try:
        return int(word)
    except ValueError:
        return None


def verdict_tokens(expected: str, observed: str) -> list[str]:
    """Judge-style summary of how the observed run differs from the expected output.

    Mirrors what an online-judge checker reports: the verdict class, whether output is
    missing or extra, and how the first differing token relates to the expected one.
    """
    body = _observed_body(observed)
    if body is None:
        kind, *rest = observed.split()
        return ["verdict", "runtime_error" if kind == "crash" else "time_limit"] + rest
    want, got = expected.split(), body.split()
    if want == got:
        return ["verdict", "presentation_error"]
    out = ["verdict", "wrong_answer"]
    want_lines, got_lines = expected.count("\n"), body.count("\n")
    out.append("fewer_lines" if got_lines < want_lines else "more_lines" if got_lines > want_lines else "same_lines")
    k = next((i for i, (a, b) in enumerate(zip(want, got)) if a != b), min(len(want), len(got)))
    if k == len(got):
        return out + ["output_truncated"]
    if k == len(want):
        return out + ["output_extra"]
    a, b = _number(want[k]), _number(got[k])
    if a is None or b is None:
        return out + ["text_differs"]
    if abs(b) > 1_000_000:
        rel = "garbage_value"
    elif b == -a:
        rel = "negated"
    elif abs(b - a) == 1:
        rel = "off_by_one"
    elif b == 0 or a == 0:
        rel = "zero_value"
    else:
        rel = "bigger" if b > a else "smaller"
    return out + ["number_differs", rel]


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", lambda m: "\n" if m.group(1) == "n" else m.group(1), text)


def behavior_tokens(failing_behavior) -> list[str]:
    out: list[str] = []
    for b in failing_behavior:
        out += ["input"] + b.input.split() + ["expected"] + text_tokens(b.expected)
        out += ["observed"] + _observed_tokens(b.observed) + verdict_tokens(b.expected, b.observed)
    return out


def example_tokens(example) -> tuple[list[str], list[str]]:
    prog, beh = _cached_tokens(example.buggy_source, tuple(example.failing_behavior))
    return list(prog), list(beh)


@functools.lru_cache(maxsize=4096)
def _cached_tokens(source: str, behaviors: tuple) -> tuple[tuple, tuple]:
    return tuple(lex_c(source)), tuple(behavior_tokens(behaviors))


@dataclass
class Vocabulary:
    tokens: list[str] = field(default_factory=list)  # non-reserved, in id order

    def __post_init__(self):
        self.index = {t: i + len(RESERVED) for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens) + len(RESERVED)

    def id(self, token: str) -> int:
        return self.index.get(token, UNK)

    def token(self, i: int) -> str:
        if i < len(RESERVED):
            return RESERVED[i]
        return self.tokens[i - len(RESERVED)]

    def dumps(self) -> str:
        return "\n".join([VOCAB_HEADER, *self.tokens]) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        if not lines or lines[0] != VOCAB_HEADER:
            raise ValueError("not a symdistill vocabulary file")
        if lines[-1] == "":
            lines = lines[:-1]
        return cls(lines[1:])

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def build_vocab(train_examples: Iterable, min_count: int = 1) -> Vocabulary:
    counts: collections.Counter[str] = collections.Counter()
    seen = 0
    for ex in train_examples:
        seen += 1
        prog, beh = example_tokens(ex)
        counts.update(prog)
        counts.update(beh)
    if not seen:
        raise EmptyTrainSplit("cannot build a vocabulary from an empty train split")
    kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    length: int  # non-PAD positions


def encode_tokens(tokens: list[str], vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> TokenSequence:
    ids = [vocab.id(t) for t in tokens[:max_len]]
    n = len(ids)
    return TokenSequence(tuple(ids + [PAD] * (max_len - n)), n)


def encode(example, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> TokenSequence:
    """Program tokens, then SEP, then failing-behavior tokens; truncated from the tail and right-padded."""
    prog, beh = example_tokens(example)
    ids = [vocab.id(t) for t in prog] + [SEP] + [vocab.id(t) for t in beh]
    ids = ids[:max_len]
    n = len(ids)
    return TokenSequence(tuple(ids + [PAD] * (max_len - n)), n)


def oov_rate(examples: Iterable, vocab: Vocabulary) -> float:
    total = unknown = 0
    for ex in examples:
        prog, beh = example_tokens(ex)
        for t in prog + beh:
            total += 1
            unknown += t not in vocab.index
    return unknown / total if total else 0.0

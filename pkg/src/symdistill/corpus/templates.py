"""Program templates: reference C programs, their test inputs, and the edit sites a bug can be injected at."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from symdistill.corpus import csubset as C
from symdistill.encode import Token, scan

COMPARATORS = {"<", ">", "<=", ">=", "==", "!="}
ARITH = {"+", "-", "*", "/", "%"}
COMPOUND = {"+=", "-=", "*=", "/=", "%="}
CONTEXTS = ("loop_header", "if_condition", "while_condition", "subscript", "return", "output", "plain")


@dataclass(frozen=True)
class EditSite:
    site_id: str
    kind: str
    context: str
    start: int
    end: int
    text: str
    shape: str = ""
    flags: tuple[str, ...] = ()


@dataclass
class ProgramTemplate:
    id: str
    source: str
    tests: list[str] = field(default_factory=list)
    aliases: dict[str, list[str]] = field(default_factory=dict)

    @property
    def edit_sites(self) -> list[EditSite]:
        return find_edit_sites(self.source)

    def site_kinds(self) -> set[str]:
        return {s.kind for s in self.edit_sites}


def load_templates(path=None) -> list[ProgramTemplate]:
    """Read a template file (JSON list). With no path, the templates shipped with the package."""
    if path is None:
        text = resources.files("symdistill.data").joinpath("templates.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)
    items = raw["templates"] if isinstance(raw, dict) else raw
    out = []
    for d in items:
        source = d["source"]
        if isinstance(source, list):
            source = "\n".join(source) + "\n"
        out.append(ProgramTemplate(d["id"], source, list(d.get("tests", [])), dict(d.get("aliases", {}))))
    return out


def rename(source: str, mapping: dict[str, str]) -> str:
    """Consistently rename identifiers at token level."""
    if not mapping:
        return source
    out, pos = [], 0
    for t in scan(source):
        if t.kind == "ident" and t.text in mapping:
            out.append(source[pos:t.start])
            out.append(mapping[t.text])
            pos = t.end
    out.append(source[pos:])
    return "".join(out)


def _line_start(source: str, offset: int) -> int:
    return source.rfind("\n", 0, offset) + 1


def _shape(node) -> str:
    if isinstance(node, C.Var):
        return "IDENT"
    if isinstance(node, C.Num):
        return "NUM"
    if isinstance(node, C.Binary) and node.op in ("+", "-") and isinstance(node.left, C.Var) and isinstance(node.right, C.Num):
        return f"IDENT {node.op} NUM"
    return "EXPR"


def _mentions(node, name: str) -> bool:
    if isinstance(node, C.Var):
        return node.name == name
    for value in vars(node).values():
        if isinstance(value, C.Node) and _mentions(value, name):
            return True
        if isinstance(value, list):
            for v in value:
                if isinstance(v, C.Node) and _mentions(v, name):
                    return True
    return False


def _indexes_with(node, name: str) -> bool:
    """True if some subscript inside ``node`` uses variable ``name``."""
    found = False

    def visit(n):
        nonlocal found
        if found:
            return
        if isinstance(n, C.Index) and _mentions(n.index, name):
            found = True
            return
        for value in vars(n).values():
            for v in value if isinstance(value, list) else [value]:
                if isinstance(v, C.Node):
                    visit(v)
                elif isinstance(v, C.Clause):
                    for s in v.stmts:
                        visit(s)
                elif isinstance(v, C.Declarator):
                    for sub in (v.size, v.init):
                        if sub is not None:
                            visit(sub)

    visit(node)
    return found


class _SiteFinder:
    def __init__(self, source: str, program: C.Program):
        self.src = source
        self.toks: list[Token] = program.tokens
        self.raw: list[tuple] = []  # (kind, context, start, end, shape, flags)

    def span(self, first: int, last: int) -> tuple[int, int]:
        return self.toks[first].start, self.toks[last].end

    def add(self, kind, context, start, end, shape="", flags=()):
        self.raw.append((kind, context, start, end, shape, tuple(flags)))

    def function(self, fn: C.Function):
        self.fn = fn
        self.stmt(fn.body, "plain")

    def stmt(self, st, ctx):
        if isinstance(st, C.Block):
            for s in st.stmts:
                self.stmt(s, ctx)
        elif isinstance(st, C.Decl):
            for d in st.items:
                if d.size is not None:
                    continue  # array sizes are never mutated
                if d.init is not None:
                    lit = d.init
                    if isinstance(lit, C.Unary) and lit.op == "-":
                        lit = lit.operand
                    if isinstance(lit, C.Num) and self.toks[lit.first].kind == "number":
                        start = self.toks[d.name_tok].end
                        end = self.toks[d.init.last].end
                        self.add("initialization", ctx, start, end)
                    self.expr(d.init, ctx)
        elif isinstance(st, C.ExprStmt):
            self.expr(st.expr, ctx)
        elif isinstance(st, C.If):
            self.cond(st.cond, "if_condition", "comparison")
            self.stmt(st.then, ctx)
            if st.else_ is not None:
                self.stmt(st.else_, ctx)
        elif isinstance(st, C.While):
            self.cond(st.cond, "while_condition", "comparison")
            self.stmt(st.body, ctx)
        elif isinstance(st, C.For):
            if st.init is not None:
                self.expr(st.init, "loop_header")
            if st.cond is not None:
                flags = ()
                var = _loop_var(st.cond)
                if var is not None and _indexes_with(st.body, var):
                    flags = ("indexes_array",)
                self.cond(st.cond, "loop_header", "loop-bound", flags)
            if st.update is not None:
                self.expr(st.update, "loop_header")
            self.stmt(st.body, ctx)
        elif isinstance(st, C.Switch):
            self.expr(st.expr, ctx)
            labels = [cl.label_tok for cl in st.clauses]
            for i, cl in enumerate(st.clauses):
                if cl.label is not None:
                    start = _line_start(self.src, self.toks[cl.label_tok].start)
                    nxt = labels[i + 1] if i + 1 < len(labels) else st.last
                    end = _line_start(self.src, self.toks[nxt].start)
                    if end > start:
                        self.add("switch-case", ctx, start, end)
                for s in cl.stmts:
                    self.stmt(s, ctx)
        elif isinstance(st, C.Return):
            if st.expr is not None:
                if self.fn.name != "main":
                    start, end = self.span(st.expr.first, st.expr.last)
                    self.add("return-expr", "return", start, end, _shape(st.expr))
                    self.expr(st.expr, "return")

    def cond(self, e, ctx, kind, flags=()):
        # comparators directly in the condition (through && / ||) are sites of ``kind``
        if isinstance(e, C.Binary) and e.op in ("&&", "||"):
            self.cond(e.left, ctx, kind, flags)
            self.cond(e.right, ctx, kind, flags)
            return
        if isinstance(e, C.Unary) and e.op == "!":
            self.cond(e.operand, ctx, kind, flags)
            return
        if isinstance(e, C.Binary) and e.op in COMPARATORS:
            t = self.toks[e.op_tok]
            self.add(kind, ctx, t.start, t.end, flags=flags)
        self.expr(e, ctx)

    def expr(self, e, ctx):
        if isinstance(e, C.Num):
            tok = self.toks[e.first]
            if tok.kind == "number" and e.first == e.last:
                self.add("constant", ctx, tok.start, tok.end, "NUM")
        elif isinstance(e, C.Binary):
            if e.op in ARITH:
                t = self.toks[e.op_tok]
                self.add("binary-operator", ctx, t.start, t.end)
            self.expr(e.left, ctx)
            self.expr(e.right, ctx)
        elif isinstance(e, C.Unary):
            self.expr(e.operand, ctx)
        elif isinstance(e, C.Assign):
            if e.op in COMPOUND:
                t = self.toks[e.op_tok]
                self.add("binary-operator", ctx, t.start, t.end)
            self.expr(e.target, ctx)
            self.expr(e.value, ctx)
        elif isinstance(e, C.IncDec):
            self.expr(e.target, ctx)
        elif isinstance(e, C.AddrOf):
            self.expr(e.target, ctx)
        elif isinstance(e, C.Index):
            shape = _shape(e.index)
            if shape != "EXPR":
                start, end = self.span(e.index.first, e.index.last)
                self.add("array-index", "subscript", start, end, shape)
            self.expr(e.index, "subscript")
        elif isinstance(e, C.Call):
            if e.name == "printf" and e.args and isinstance(e.args[0], C.Str):
                tok = self.toks[e.args[0].first]
                self.add("io-format", "output", tok.start, tok.end)
            inner = "output" if e.name == "printf" else ctx
            for a in e.args:
                self.expr(a, inner)


def _loop_var(cond) -> Optional[str]:
    if isinstance(cond, C.Binary) and cond.op in COMPARATORS and isinstance(cond.left, C.Var):
        return cond.left.name
    return None


def find_edit_sites(source: str) -> list[EditSite]:
    """All edit sites of a parseable program, in source order, with stable per-kind ids."""
    program = C.parse(source)
    finder = _SiteFinder(source, program)
    for fn in program.functions.values():
        finder.function(fn)
    raw = sorted(set(finder.raw), key=lambda r: (r[2], r[3], r[0]))
    counters: dict[str, int] = {}
    sites = []
    for kind, ctx, start, end, shape, flags in raw:
        n = counters.get(kind, 0)
        counters[kind] = n + 1
        sites.append(EditSite(f"{kind}#{n}", kind, ctx, start, end, source[start:end], shape, flags))
    return sites

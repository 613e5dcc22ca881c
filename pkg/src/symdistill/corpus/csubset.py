"""Parser and tree-walking interpreter for the small C subset the program templates use.

Supported: ``int``/``void`` functions, scalar and fixed-size ``int`` arrays, if/else,
while, for, switch, break/continue/return, the usual integer operators with C
truncating division, ``scanf("%d"...)`` and ``printf`` with ``%d``/``%c``/``%%``.
Runtime faults (out-of-bounds access, division by zero, runaway loops) are reported
the way a sanitizer-instrumented build would report them, not as undefined behaviour.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from symdistill.encode import Token, scan

# Value read from a local that was declared without an initializer.
UNINIT_VALUE = 4195856
STEP_LIMIT = 20000
CALL_DEPTH_LIMIT = 64


class ParseError(ValueError):
    pass


class Unsupported(ParseError):
    pass


class RuntimeFault(Exception):
    def __init__(self, kind: str):
        super().__init__(kind)
        self.kind = kind


# --- AST -------------------------------------------------------------------

@dataclass
class Node:
    first: int  # token index span, inclusive
    last: int


@dataclass
class Num(Node):
    value: int


@dataclass
class Str(Node):
    value: str


@dataclass
class Var(Node):
    name: str


@dataclass
class Index(Node):
    base: Node
    index: Node


@dataclass
class Call(Node):
    name: str
    args: list


@dataclass
class Unary(Node):
    op: str
    operand: Node
    op_tok: int


@dataclass
class Binary(Node):
    op: str
    left: Node
    right: Node
    op_tok: int


@dataclass
class Assign(Node):
    op: str
    target: Node
    value: Node
    op_tok: int


@dataclass
class IncDec(Node):
    op: str
    target: Node
    prefix: bool


@dataclass
class AddrOf(Node):
    target: Node


@dataclass
class Declarator:
    name: str
    name_tok: int
    size: Optional[Node] = None
    init: Optional[Node] = None
    init_list: Optional[list] = None
    eq_tok: Optional[int] = None


@dataclass
class Decl(Node):
    items: list


@dataclass
class Block(Node):
    stmts: list


@dataclass
class If(Node):
    cond: Node
    then: Node
    else_: Optional[Node]


@dataclass
class While(Node):
    cond: Node
    body: Node


@dataclass
class For(Node):
    init: Optional[Node]
    cond: Optional[Node]
    update: Optional[Node]
    body: Node


@dataclass
class Clause:
    label: Optional[Node]  # None for default
    label_tok: int
    stmts: list


@dataclass
class Switch(Node):
    expr: Node
    clauses: list


@dataclass
class Jump(Node):
    kind: str  # break / continue


@dataclass
class Return(Node):
    expr: Optional[Node]


@dataclass
class ExprStmt(Node):
    expr: Node


@dataclass
class Function:
    name: str
    params: list  # (name, is_array)
    body: Block
    returns_void: bool


@dataclass
class Program:
    tokens: list
    functions: dict = field(default_factory=dict)
    globals: list = field(default_factory=list)


# --- parser ----------------------------------------------------------------

ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%="}
BINARY_LEVELS = [
    {"||"},
    {"&&"},
    {"==", "!="},
    {"<", ">", "<=", ">="},
    {"+", "-"},
    {"*", "/", "%"},
]
TYPE_WORDS = {"int", "void"}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = [t for t in tokens if t.kind != "directive"]
        self.orig_index = [i for i, t in enumerate(tokens) if t.kind != "directive"]
        self.pos = 0

    # token indices stored in nodes refer to the unfiltered token list
    def _ix(self, p: int) -> int:
        return self.orig_index[p]

    def peek(self, k: int = 0) -> Optional[Token]:
        p = self.pos + k
        return self.toks[p] if p < len(self.toks) else None

    def at(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.text == text and t.kind in ("op", "ident")

    def expect(self, text: str) -> int:
        t = self.peek()
        if t is None or t.text != text:
            got = "end of input" if t is None else repr(t.text)
            raise ParseError(f"expected {text!r}, got {got}")
        self.pos += 1
        return self._ix(self.pos - 1)

    def ident(self) -> tuple[str, int]:
        t = self.peek()
        if t is None or t.kind != "ident":
            raise ParseError(f"expected identifier, got {t.text if t else 'end of input'!r}")
        self.pos += 1
        return t.text, self._ix(self.pos - 1)

    def program(self, all_tokens) -> Program:
        prog = Program(all_tokens)
        while self.peek() is not None:
            start = self.pos
            ret = self.peek().text
            if ret not in TYPE_WORDS:
                raise Unsupported(f"unsupported top-level construct at {ret!r}")
            self.pos += 1
            name, _ = self.ident()
            if self.at("("):
                params = self.params()
                body = self.block()
                prog.functions[name] = Function(name, params, body, ret == "void")
            else:
                self.pos = start
                prog.globals.append(self.declaration())
        if "main" not in prog.functions:
            raise Unsupported("program has no main function")
        return prog

    def params(self) -> list:
        self.expect("(")
        out = []
        if self.at("void") and self.peek(1) is not None and self.peek(1).text == ")":
            self.pos += 1
        while not self.at(")"):
            if not self.at("int"):
                raise Unsupported("only int parameters are supported")
            self.pos += 1
            name, _ = self.ident()
            is_array = False
            if self.at("["):
                self.expect("[")
                self.expect("]")
                is_array = True
            out.append((name, is_array))
            if not self.at(")"):
                self.expect(",")
        self.expect(")")
        return out

    def block(self) -> Block:
        first = self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.peek() is None:
                raise ParseError("unterminated block")
            stmts.append(self.statement())
        last = self.expect("}")
        return Block(first, last, stmts)

    def declaration(self) -> Decl:
        first = self._ix(self.pos)
        if not self.at("int"):
            raise Unsupported("only int declarations are supported")
        self.pos += 1
        items = []
        while True:
            name, name_tok = self.ident()
            d = Declarator(name, name_tok)
            if self.at("["):
                self.expect("[")
                d.size = self.expr()
                self.expect("]")
            if self.at("="):
                d.eq_tok = self.expect("=")
                if self.at("{"):
                    self.expect("{")
                    d.init_list = []
                    while not self.at("}"):
                        d.init_list.append(self.assignment())
                        if not self.at("}"):
                            self.expect(",")
                    self.expect("}")
                else:
                    d.init = self.assignment()
            items.append(d)
            if self.at(","):
                self.pos += 1
                continue
            break
        last = self.expect(";")
        return Decl(first, last, items)

    def statement(self) -> Node:
        t = self.peek()
        first = self._ix(self.pos)
        if t.text == "{":
            return self.block()
        if t.text == "int":
            return self.declaration()
        if t.text == "if":
            self.pos += 1
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.statement()
            else_ = None
            if self.at("else"):
                self.pos += 1
                else_ = self.statement()
            return If(first, self._ix(self.pos - 1), cond, then, else_)
        if t.text == "while":
            self.pos += 1
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            body = self.statement()
            return While(first, self._ix(self.pos - 1), cond, body)
        if t.text == "for":
            self.pos += 1
            self.expect("(")
            init = None if self.at(";") else self.expr()
            self.expect(";")
            cond = None if self.at(";") else self.expr()
            self.expect(";")
            update = None if self.at(")") else self.expr()
            self.expect(")")
            body = self.statement()
            return For(first, self._ix(self.pos - 1), init, cond, update, body)
        if t.text == "switch":
            return self.switch()
        if t.text in ("break", "continue"):
            self.pos += 1
            last = self.expect(";")
            return Jump(first, last, t.text)
        if t.text == "return":
            self.pos += 1
            expr = None if self.at(";") else self.expr()
            last = self.expect(";")
            return Return(first, last, expr)
        if t.text in ("do", "goto", "char", "float", "double", "long", "struct"):
            raise Unsupported(f"unsupported statement {t.text!r}")
        e = self.expr()
        last = self.expect(";")
        return ExprStmt(first, last, e)

    def switch(self) -> Switch:
        first = self._ix(self.pos)
        self.pos += 1
        self.expect("(")
        e = self.expr()
        self.expect(")")
        self.expect("{")
        clauses: list[Clause] = []
        while not self.at("}"):
            if self.at("case"):
                label_tok = self._ix(self.pos)
                self.pos += 1
                label = self.expr()
                self.expect(":")
                clauses.append(Clause(label, label_tok, []))
            elif self.at("default"):
                label_tok = self._ix(self.pos)
                self.pos += 1
                self.expect(":")
                clauses.append(Clause(None, label_tok, []))
            else:
                if not clauses:
                    raise ParseError("statement before first case label")
                clauses[-1].stmts.append(self.statement())
        last = self.expect("}")
        return Switch(first, last, e, clauses)

    # expressions

    def expr(self) -> Node:
        return self.assignment()

    def assignment(self) -> Node:
        left = self.binary(0)
        t = self.peek()
        if t is not None and t.text in ASSIGN_OPS and t.kind == "op":
            op_tok = self._ix(self.pos)
            self.pos += 1
            if not isinstance(left, (Var, Index)):
                raise ParseError("assignment to non-lvalue")
            value = self.assignment()
            return Assign(left.first, value.last, t.text, left, value, op_tok)
        return left

    def binary(self, level: int) -> Node:
        if level == len(BINARY_LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        while True:
            t = self.peek()
            if t is None or t.kind != "op" or t.text not in BINARY_LEVELS[level]:
                return left
            op_tok = self._ix(self.pos)
            self.pos += 1
            right = self.binary(level + 1)
            left = Binary(left.first, right.last, t.text, left, right, op_tok)

    def unary(self) -> Node:
        t = self.peek()
        if t is None:
            raise ParseError("unexpected end of input in expression")
        first = self._ix(self.pos)
        if t.kind == "op" and t.text in ("-", "!", "+"):
            self.pos += 1
            operand = self.unary()
            return Unary(first, operand.last, t.text, operand, first)
        if t.kind == "op" and t.text in ("++", "--"):
            self.pos += 1
            target = self.unary()
            return IncDec(first, target.last, t.text, target, True)
        if t.kind == "op" and t.text == "&":
            self.pos += 1
            target = self.unary()
            return AddrOf(first, target.last, target)
        return self.postfix()

    def postfix(self) -> Node:
        node = self.primary()
        while True:
            t = self.peek()
            if t is None:
                return node
            if t.text == "[":
                self.pos += 1
                idx = self.expr()
                last = self.expect("]")
                node = Index(node.first, last, node, idx)
            elif t.text in ("++", "--"):
                self.pos += 1
                node = IncDec(node.first, self._ix(self.pos - 1), t.text, node, False)
            else:
                return node

    def primary(self) -> Node:
        t = self.peek()
        ix = self._ix(self.pos)
        if t.kind == "number":
            self.pos += 1
            try:
                return Num(ix, ix, int(t.text, 0))
            except ValueError:
                raise Unsupported(f"unsupported numeric literal {t.text!r}") from None
        if t.kind == "char":
            self.pos += 1
            body = t.text[1:-1].encode().decode("unicode_escape")
            if len(body) != 1:
                raise Unsupported(f"unsupported char literal {t.text!r}")
            return Num(ix, ix, ord(body))
        if t.kind == "string":
            self.pos += 1
            return Str(ix, ix, t.text[1:-1].encode().decode("unicode_escape"))
        if t.kind == "ident":
            self.pos += 1
            if self.at("("):
                self.pos += 1
                args = []
                while not self.at(")"):
                    args.append(self.assignment())
                    if not self.at(")"):
                        self.expect(",")
                last = self.expect(")")
                return Call(ix, last, t.text, args)
            return Var(ix, ix, t.text)
        if t.text == "(":
            self.pos += 1
            e = self.expr()
            last = self.expect(")")
            # widen the span to cover the parentheses
            return _respan(e, ix, last)
        raise ParseError(f"unexpected token {t.text!r}")


def _respan(node: Node, first: int, last: int) -> Node:
    import copy

    node = copy.copy(node)
    node.first, node.last = first, last
    return node


def parse(source: str) -> Program:
    tokens = scan(source)
    return _Parser(tokens).program(tokens)


# --- interpreter -----------------------------------------------------------

class _Cell:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


class _Array:
    __slots__ = ("items",)

    def __init__(self, size: int):
        self.items = [None] * size


class _Break(Exception):
    pass


class _Continue(Exception):
    pass


class _Return(Exception):
    def __init__(self, value):
        self.value = value


def _wrap(v: int) -> int:
    v &= 0xFFFFFFFF
    return v - (1 << 32) if v & 0x80000000 else v


def _cdiv(a: int, b: int) -> int:
    if b == 0:
        raise RuntimeFault("division_by_zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _cmod(a: int, b: int) -> int:
    if b == 0:
        raise RuntimeFault("division_by_zero")
    return a - _cdiv(a, b) * b


@dataclass(frozen=True)
class ExecResult:
    status: str  # ok / crash / timeout
    output: str
    detail: str = ""

    def describe(self) -> str:
        if self.status == "timeout":
            return "timeout"
        if self.status == "crash":
            return f"crash {self.detail}"
        return "prints " + _quote(self.output)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace("\n", "\\n").replace('"', '\\"') + '"'


class Interpreter:
    def __init__(self, program: Program, stdin: str, step_limit: int = STEP_LIMIT):
        self.prog = program
        self.inputs = stdin.split()
        self.in_pos = 0
        self.out: list[str] = []
        self.steps = 0
        self.step_limit = step_limit
        self.depth = 0
        self.globals: dict = {}

    def run(self) -> ExecResult:
        try:
            for decl in self.prog.globals:
                self.exec_decl(decl, self.globals)
            self.call("main", [])
        except RuntimeFault as f:
            kind = f.kind
            if kind == "timeout":
                return ExecResult("timeout", "".join(self.out))
            return ExecResult("crash", "".join(self.out), kind)
        return ExecResult("ok", "".join(self.out))

    def tick(self):
        self.steps += 1
        if self.steps > self.step_limit:
            raise RuntimeFault("timeout")

    # scopes: list of dicts, innermost last
    def lookup(self, scopes, name):
        for s in reversed(scopes):
            if name in s:
                return s[name]
        if name in self.globals:
            return self.globals[name]
        raise RuntimeFault("undeclared_identifier")

    def call(self, name, args):
        fn = self.prog.functions.get(name)
        if fn is None:
            raise RuntimeFault("unknown_function")
        if len(args) != len(fn.params):
            raise RuntimeFault("bad_call")
        self.depth += 1
        if self.depth > CALL_DEPTH_LIMIT:
            raise RuntimeFault("stack_overflow")
        scope = {}
        for (pname, is_array), value in zip(fn.params, args):
            if is_array != isinstance(value, _Array):
                raise RuntimeFault("bad_call")
            scope[pname] = value if is_array else _Cell(value)
        try:
            self.exec_block(fn.body.stmts, [scope])
            result = None if fn.returns_void else UNINIT_VALUE
        except _Return as r:
            result = r.value
        self.depth -= 1
        return result

    def exec_block(self, stmts, scopes):
        scopes = scopes + [{}]
        for st in stmts:
            self.exec(st, scopes)

    def exec_decl(self, decl: Decl, scope: dict, scopes=None):
        scopes = scopes if scopes is not None else [scope]
        for d in decl.items:
            if d.size is not None:
                size = self.eval(d.size, scopes)
                if size <= 0 or size > 4096:
                    raise RuntimeFault("bad_array_size")
                arr = _Array(size)
                if d.init_list is not None:
                    if len(d.init_list) > size:
                        raise RuntimeFault("bad_initializer")
                    for i, e in enumerate(d.init_list):
                        arr.items[i] = self.eval(e, scopes)
                    for i in range(len(d.init_list), size):
                        arr.items[i] = 0
                scope[d.name] = arr
            else:
                value = self.eval(d.init, scopes) if d.init is not None else None
                scope[d.name] = _Cell(value)

    def exec(self, st, scopes):
        self.tick()
        if isinstance(st, ExprStmt):
            self.eval(st.expr, scopes)
        elif isinstance(st, Decl):
            self.exec_decl(st, scopes[-1], scopes)
        elif isinstance(st, Block):
            self.exec_block(st.stmts, scopes)
        elif isinstance(st, If):
            if self.eval(st.cond, scopes):
                self.exec(st.then, scopes)
            elif st.else_ is not None:
                self.exec(st.else_, scopes)
        elif isinstance(st, While):
            while self.eval(st.cond, scopes):
                self.tick()
                try:
                    self.exec(st.body, scopes)
                except _Break:
                    break
                except _Continue:
                    continue
        elif isinstance(st, For):
            if st.init is not None:
                self.eval(st.init, scopes)
            while st.cond is None or self.eval(st.cond, scopes):
                self.tick()
                try:
                    self.exec(st.body, scopes)
                except _Break:
                    break
                except _Continue:
                    pass
                if st.update is not None:
                    self.eval(st.update, scopes)
        elif isinstance(st, Switch):
            self.exec_switch(st, scopes)
        elif isinstance(st, Jump):
            raise _Break() if st.kind == "break" else _Continue()
        elif isinstance(st, Return):
            raise _Return(None if st.expr is None else self.eval(st.expr, scopes))
        else:  # pragma: no cover - parser produces no other statements
            raise RuntimeFault("bad_statement")

    def exec_switch(self, st: Switch, scopes):
        value = self.eval(st.expr, scopes)
        start = None
        for i, cl in enumerate(st.clauses):
            if cl.label is not None and self.eval(cl.label, scopes) == value:
                start = i
                break
        if start is None:
            start = next((i for i, cl in enumerate(st.clauses) if cl.label is None), None)
        if start is None:
            return
        inner = scopes + [{}]
        try:
            for cl in st.clauses[start:]:
                for s in cl.stmts:
                    self.exec(s, inner)
        except _Break:
            pass

    # lvalues: (container, key) where container is _Cell (key None) or _Array
    def lvalue(self, node, scopes):
        if isinstance(node, Var):
            slot = self.lookup(scopes, node.name)
            if isinstance(slot, _Array):
                raise RuntimeFault("array_assignment")
            return slot, None
        if isinstance(node, Index):
            arr = self.eval_array(node.base, scopes)
            i = self.eval(node.index, scopes)
            if not 0 <= i < len(arr.items):
                raise RuntimeFault("out_of_bounds")
            return arr, i
        raise RuntimeFault("bad_lvalue")

    def load(self, slot, key):
        v = slot.value if key is None else slot.items[key]
        return UNINIT_VALUE if v is None else v

    def store(self, slot, key, value):
        if key is None:
            slot.value = value
        else:
            slot.items[key] = value

    def eval_array(self, node, scopes) -> _Array:
        if not isinstance(node, Var):
            raise RuntimeFault("bad_array")
        arr = self.lookup(scopes, node.name)
        if not isinstance(arr, _Array):
            raise RuntimeFault("not_an_array")
        return arr

    def eval(self, e, scopes):
        self.tick()
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Var):
            slot = self.lookup(scopes, e.name)
            if isinstance(slot, _Array):
                return slot
            return self.load(slot, None)
        if isinstance(e, Index):
            return self.load(*self.lvalue(e, scopes))
        if isinstance(e, Binary):
            if e.op == "&&":
                return int(bool(self.eval(e.left, scopes)) and bool(self.eval(e.right, scopes)))
            if e.op == "||":
                return int(bool(self.eval(e.left, scopes)) or bool(self.eval(e.right, scopes)))
            return self.arith(e.op, self.eval(e.left, scopes), self.eval(e.right, scopes))
        if isinstance(e, Unary):
            v = self.eval(e.operand, scopes)
            if e.op == "-":
                return _wrap(-v)
            if e.op == "!":
                return int(not v)
            return v
        if isinstance(e, Assign):
            slot, key = self.lvalue(e.target, scopes)
            value = self.eval(e.value, scopes)
            if e.op != "=":
                value = self.arith(e.op[:-1], self.load(slot, key), value)
            self.store(slot, key, value)
            return value
        if isinstance(e, IncDec):
            slot, key = self.lvalue(e.target, scopes)
            old = self.load(slot, key)
            new = _wrap(old + (1 if e.op == "++" else -1))
            self.store(slot, key, new)
            return new if e.prefix else old
        if isinstance(e, Call):
            if e.name == "printf":
                return self.printf(e.args, scopes)
            if e.name == "scanf":
                return self.scanf(e.args, scopes)
            if e.name == "abs":
                return abs(self.eval(e.args[0], scopes))
            args = [self.eval(a, scopes) for a in e.args]
            result = self.call(e.name, args)
            return 0 if result is None else result
        raise RuntimeFault("bad_expression")

    def arith(self, op, a, b):
        if isinstance(a, _Array) or isinstance(b, _Array):
            raise RuntimeFault("array_arithmetic")
        if op == "+":
            return _wrap(a + b)
        if op == "-":
            return _wrap(a - b)
        if op == "*":
            return _wrap(a * b)
        if op == "/":
            return _wrap(_cdiv(a, b))
        if op == "%":
            return _cmod(a, b)
        return int({"<": a < b, ">": a > b, "<=": a <= b, ">=": a >= b, "==": a == b, "!=": a != b}[op])

    def printf(self, args, scopes):
        if not args or not isinstance(args[0], Str):
            raise RuntimeFault("bad_format")
        fmt = args[0].value
        values = [self.eval(a, scopes) for a in args[1:]]
        out = []
        i = 0
        while i < len(fmt):
            c = fmt[i]
            if c == "%" and i + 1 < len(fmt):
                spec = fmt[i + 1]
                i += 2
                if spec == "%":
                    out.append("%")
                    continue
                if not values:
                    raise RuntimeFault("format_argument_missing")
                v = values.pop(0)
                if isinstance(v, _Array):
                    raise RuntimeFault("bad_format_argument")
                out.append(str(v) if spec in "di" else chr(v % 256) if spec == "c" else "?")
                continue
            out.append(c)
            i += 1
        s = "".join(out)
        self.out.append(s)
        return len(s)

    def scanf(self, args, scopes):
        if not args or not isinstance(args[0], Str):
            raise RuntimeFault("bad_format")
        count = 0
        for a in args[1:]:
            if not isinstance(a, AddrOf):
                raise RuntimeFault("scanf_needs_address")
            if self.in_pos >= len(self.inputs):
                return -1 if count == 0 else count
            try:
                v = int(self.inputs[self.in_pos])
            except ValueError:
                return count
            self.in_pos += 1
            slot, key = self.lvalue(a.target, scopes)
            self.store(slot, key, _wrap(v))
            count += 1
        return count


def run(source_or_program, stdin: str, step_limit: int = STEP_LIMIT) -> ExecResult:
    prog = parse(source_or_program) if isinstance(source_or_program, str) else source_or_program
    return Interpreter(prog, stdin, step_limit).run()

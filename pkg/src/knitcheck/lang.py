"""Heap language front end: parsing, validation, normalization, control flow."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional, Union

DATA_SORTS = ("int", "bool")
FRESH_PREFIX = "$"


class LangError(Exception):
    pass


class ParseError(LangError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(where + message)


class DuplicateLabel(LangError):
    pass


class UndeclaredIdentifier(LangError):
    pass


class BranchArityError(LangError):
    pass


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Lit:
    value: Union[int, bool]


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Op:
    op: str
    args: tuple


@dataclass(frozen=True)
class HeapAtom:
    """Equality between pointer `lhs` (optionally `lhs->field`) and `rhs` (None is nil)."""

    lhs: str
    field: Optional[str]
    rhs: Optional[str]


Expr = Union[Lit, Name, Op, HeapAtom]

ARITH_OPS = ("+", "-", "*", "neg")
COMPARE_OPS = ("<", "<=", ">", ">=")
EQ_OPS = ("=", "!=")
BOOL_OPS = ("and", "or", "not", "=>")


def heap_atoms(expr):
    if isinstance(expr, HeapAtom):
        yield expr
    elif isinstance(expr, Op):
        for a in expr.args:
            yield from heap_atoms(a)


def as_heap_condition(expr):
    """Return (atom, negated) if expr is a single optionally negated heap atom."""
    negated = False
    while isinstance(expr, Op) and expr.op == "not":
        negated = not negated
        expr = expr.args[0]
    if isinstance(expr, HeapAtom):
        return expr, negated
    return None


def expr_names(expr):
    if isinstance(expr, Name):
        yield expr.ident
    elif isinstance(expr, Op):
        for a in expr.args:
            yield from expr_names(a)
    elif isinstance(expr, HeapAtom):
        yield expr.lhs
        if expr.rhs is not None:
            yield expr.rhs


# ---------------------------------------------------------------------------
# Statements


@dataclass(frozen=True)
class Stmt:
    label: int


@dataclass(frozen=True)
class Skip(Stmt):
    pass


@dataclass(frozen=True)
class Exit(Stmt):
    pass


@dataclass(frozen=True)
class Assign(Stmt):
    """d := exp, where exp may also be a heap condition (d_bool := heap_cond)."""

    var: str
    expr: Expr


@dataclass(frozen=True)
class PtrNil(Stmt):
    var: str


@dataclass(frozen=True)
class PtrCopy(Stmt):
    var: str
    source: str


@dataclass(frozen=True)
class PtrRead(Stmt):
    var: str
    source: str
    field: str


@dataclass(frozen=True)
class FieldNil(Stmt):
    var: str
    field: str


@dataclass(frozen=True)
class FieldWrite(Stmt):
    var: str
    field: str
    source: str


@dataclass(frozen=True)
class DataWrite(Stmt):
    var: str
    expr: Expr


@dataclass(frozen=True)
class DataRead(Stmt):
    var: str
    source: str


@dataclass(frozen=True)
class New(Stmt):
    var: str


@dataclass(frozen=True)
class Free(Stmt):
    var: str


@dataclass(frozen=True)
class If(Stmt):
    cond: Expr
    then_body: tuple
    else_body: tuple


@dataclass(frozen=True)
class While(Stmt):
    cond: Expr
    body: tuple


BRANCHING = (If, While)


def is_heap_assign(stmt):
    return isinstance(stmt, Assign) and any(True for _ in heap_atoms(stmt.expr))


def walk(body):
    for s in body:
        yield s
        if isinstance(s, If):
            yield from walk(s.then_body)
            yield from walk(s.else_body)
        elif isinstance(s, While):
            yield from walk(s.body)


# ---------------------------------------------------------------------------
# Program


@dataclass(frozen=True)
class Program:
    pointer_vars: tuple
    data_vars: tuple  # ((name, sort), ...)
    pointer_fields: tuple
    body: tuple
    statements: dict = field(compare=False)
    succ: dict = field(compare=False)
    entry: int = 0

    @property
    def root_var(self):
        return self.pointer_vars[0]

    @property
    def data_sorts(self):
        return dict(self.data_vars)

    @property
    def data_names(self):
        return tuple(n for n, _ in self.data_vars)

    @property
    def labels(self):
        return tuple(sorted(self.statements))

    def exit_labels(self):
        return tuple(l for l, s in sorted(self.statements.items()) if isinstance(s, Exit))

    def field_index(self, name):
        """1-based position of a pointer field."""
        return self.pointer_fields.index(name) + 1


def build_program(pointer_vars, data_vars, pointer_fields, body):
    """Assemble a Program from a structured body, computing the flat control flow."""
    statements = {}
    succ = {}
    duplicates = []

    def first_label(seq, follow):
        return seq[0].label if seq else follow

    def link(seq, follow):
        for idx, s in enumerate(seq):
            nxt = seq[idx + 1].label if idx + 1 < len(seq) else follow
            if s.label in statements:
                duplicates.append(s.label)
            statements[s.label] = s
            if isinstance(s, Exit):
                succ[s.label] = None
            elif isinstance(s, If):
                succ[s.label] = (first_label(s.then_body, nxt), first_label(s.else_body, nxt))
                link(s.then_body, nxt)
                link(s.else_body, nxt)
            elif isinstance(s, While):
                succ[s.label] = (first_label(s.body, s.label), nxt)
                link(s.body, s.label)
            else:
                succ[s.label] = nxt

    body = tuple(body)
    link(body, None)
    if duplicates:
        raise DuplicateLabel(f"duplicate statement label {duplicates[0]}")
    if not body:
        raise ParseError("program has no statements")
    return Program(
        pointer_vars=tuple(pointer_vars),
        data_vars=tuple(tuple(d) for d in data_vars),
        pointer_fields=tuple(pointer_fields),
        body=body,
        statements=statements,
        succ=succ,
        entry=body[0].label,
    )


def successor(prog, pc, branch=None):
    stmt = prog.statements[pc]
    nxt = prog.succ[pc]
    if isinstance(stmt, BRANCHING):
        if branch is None:
            raise BranchArityError(f"statement {pc} is a branch and needs a branch outcome")
        return nxt[0] if branch else nxt[1]
    if branch is not None:
        raise BranchArityError(f"statement {pc} is not a branch")
    return nxt


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$']*)
  | (?P<sym>:=|->|!=|<=|>=|&&|\|\||==>|=>|[→≠≤≥¬∧∨]|[-+*=<>():;,!{}])
    """,
    re.VERBOSE,
)

_UNICODE = {"→": "->", "≠": "!=", "≤": "<=", "≥": ">=", "¬": "!", "∧": "&&", "∨": "||", "==>": "=>"}

KEYWORDS = {
    "pointer", "fields", "int", "bool", "if", "then", "else", "fi", "while", "do", "od",
    "skip", "exit", "new", "free", "nil", "true", "false", "and", "or", "not", "data",
}


@dataclass
class Token:
    kind: str  # 'num', 'ident', 'kw', 'sym', 'eof'
    text: str
    line: int
    col: int


def tokenize(text):
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("num", "sym"):
            tokens.append(Token(kind, _UNICODE.get(tok, tok), line, col))
        elif kind == "ident":
            tokens.append(Token("kw" if tok in KEYWORDS else "ident", tok, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0
        self.pointers = []
        self.data = []
        self.fields = []
        self.fields_declared = False

    # token helpers
    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, offset=1):
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def at(self, text):
        return self.tok.kind in ("kw", "sym") and self.tok.text == text

    def accept(self, text):
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            raise self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")

    def ident(self):
        if self.tok.kind != "ident":
            raise self.error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    # declarations
    def parse_decls(self):
        while self.tok.kind == "kw" and self.tok.text in ("pointer", "int", "bool", "fields"):
            kind = self.tok.text
            self.i += 1
            names = [self.ident()]
            while self.accept(","):
                names.append(self.ident())
            self.accept(";")
            for t in names:
                if kind == "fields":
                    if t.text in self.fields:
                        raise self.error(f"field {t.text} declared twice", t)
                    self.fields.append(t.text)
                    self.fields_declared = True
                    continue
                if t.text in self.pointers or t.text in dict(self.data):
                    raise self.error(f"variable {t.text} declared twice", t)
                if kind == "pointer":
                    self.pointers.append(t.text)
                else:
                    self.data.append((t.text, kind))

    def is_pointer(self, name):
        return name in self.pointers

    def is_data(self, name):
        return name in dict(self.data)

    def check_declared(self, tok):
        if not (self.is_pointer(tok.text) or self.is_data(tok.text)):
            raise UndeclaredIdentifier(f"{tok.line}:{tok.col}: undeclared identifier {tok.text}")

    def use_field(self, tok):
        if tok.text == "data":
            return
        if tok.text not in self.fields:
            if self.fields_declared:
                raise UndeclaredIdentifier(f"{tok.line}:{tok.col}: undeclared pointer field {tok.text}")
            self.fields.append(tok.text)

    # statements
    def parse_block(self, terminators):
        stmts = []
        while True:
            if self.tok.kind == "eof" and not terminators:
                return stmts
            if self.tok.kind == "num" and self.peek().text == ":":
                nxt = self.peek(2)
                if nxt.kind == "kw" and nxt.text in terminators:
                    self.i += 2  # label on a delimiter line carries no meaning
                    continue
            if self.tok.kind == "kw" and self.tok.text in terminators:
                return stmts
            if self.tok.kind == "eof":
                raise self.error(f"expected one of {sorted(terminators)} before end of input")
            stmts.append(self.parse_stmt())

    def parse_stmt(self):
        label = None
        if self.tok.kind == "num":
            label = int(self.tok.text)
            self.i += 1
            self.expect(":")
        stmt = self.parse_stmt_body(label)
        self.accept(";")
        return stmt

    def parse_stmt_body(self, label):
        t = self.tok
        if self.accept("skip"):
            return Skip(label)
        if self.accept("exit"):
            return Exit(label)
        if self.accept("new"):
            return New(label, self.pointer_name())
        if self.accept("free"):
            return Free(label, self.pointer_name())
        if self.accept("if"):
            cond = self.parse_cond()
            self.expect("then")
            then_body = self.parse_block({"else", "fi"})
            else_body = []
            if self.accept("else"):
                else_body = self.parse_block({"fi"})
            self.expect("fi")
            if not then_body:
                raise self.error("empty then-branch", t)
            return If(label, cond, tuple(then_body), tuple(else_body))
        if self.accept("while"):
            cond = self.parse_cond()
            self.expect("do")
            body = self.parse_block({"od"})
            self.expect("od")
            if not body:
                raise self.error("empty loop body", t)
            return While(label, cond, tuple(body))
        target = self.ident()
        self.check_declared(target)
        if self.accept("->"):
            fld = self.ident_or_data()
            self.expect(":=")
            if not self.is_pointer(target.text):
                raise self.error(f"{target.text} is not a pointer", target)
            if fld.text == "data":
                return DataWrite(label, target.text, self.parse_expr())
            self.use_field(fld)
            if self.accept("nil"):
                return FieldNil(label, target.text, fld.text)
            src = self.pointer_name()
            return FieldWrite(label, target.text, fld.text, src)
        self.expect(":=")
        if self.is_pointer(target.text):
            if self.accept("nil"):
                return PtrNil(label, target.text)
            src = self.pointer_name()
            if self.accept("->"):
                fld = self.ident_or_data()
                if fld.text == "data":
                    raise self.error("cannot assign data to a pointer", fld)
                self.use_field(fld)
                return PtrRead(label, target.text, src, fld.text)
            return PtrCopy(label, target.text, src)
        # data target
        if self.tok.kind == "ident" and self.is_pointer(self.tok.text) and self.peek().text == "->" \
                and self.peek(2).text == "data":
            src = self.tok.text
            self.i += 3
            return DataRead(label, target.text, src)
        return Assign(label, target.text, self.parse_expr())

    def ident_or_data(self):
        if self.at("data"):
            t = self.tok
            self.i += 1
            return t
        return self.ident()

    def pointer_name(self):
        t = self.ident()
        self.check_declared(t)
        if not self.is_pointer(t.text):
            raise self.error(f"{t.text} is not a pointer", t)
        return t.text

    # expressions
    def parse_cond(self):
        return self.parse_expr()

    def parse_expr(self):
        return self.parse_implies()

    def parse_implies(self):
        lhs = self.parse_or()
        if self.accept("=>"):
            return Op("=>", (lhs, self.parse_implies()))
        return lhs

    def parse_or(self):
        lhs = self.parse_and()
        while self.at("||") or self.at("or"):
            self.i += 1
            lhs = Op("or", (lhs, self.parse_and()))
        return lhs

    def parse_and(self):
        lhs = self.parse_not()
        while self.at("&&") or self.at("and"):
            self.i += 1
            lhs = Op("and", (lhs, self.parse_not()))
        return lhs

    def parse_not(self):
        if self.at("!") or self.at("not"):
            self.i += 1
            return Op("not", (self.parse_not(),))
        return self.parse_compare()

    def parse_compare(self):
        start = self.tok
        lhs = self.parse_operand()
        for op in ("=", "!=", "<=", ">=", "<", ">"):
            if self.at(op):
                self.i += 1
                rhs = self.parse_operand()
                return self.make_compare(op, lhs, rhs, start)
        if isinstance(lhs, _PtrOperand):
            raise self.error("pointer used as a data value", start)
        return lhs

    def make_compare(self, op, lhs, rhs, tok):
        lp, rp = isinstance(lhs, _PtrOperand), isinstance(rhs, _PtrOperand)
        if lp or rp:
            if not (lp and rp) or op not in EQ_OPS:
                raise self.error("heap conditions compare two pointers with = or !=", tok)
            if lhs.var is None:
                lhs, rhs = rhs, lhs
            if lhs.var is None:
                raise self.error("comparison of nil with nil", tok)
            if lhs.field is None and rhs.field is not None:
                lhs, rhs = rhs, lhs
            if rhs.field is not None:
                raise self.error("at most one side of a heap condition may read a field", tok)
            atom = HeapAtom(lhs.var, lhs.field, rhs.var)
            return atom if op == "=" else Op("not", (atom,))
        return Op(op, (lhs, rhs))

    def parse_operand(self):
        return self.parse_additive()

    def parse_additive(self):
        lhs = self.parse_mult()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            lhs = Op(op, (self._data(lhs), self._data(self.parse_mult())))
        return lhs

    def parse_mult(self):
        lhs = self.parse_unary()
        while self.at("*"):
            self.i += 1
            lhs = Op("*", (self._data(lhs), self._data(self.parse_unary())))
        return lhs

    def parse_unary(self):
        if self.accept("-"):
            return Op("neg", (self._data(self.parse_unary()),))
        return self.parse_atom()

    def _data(self, e):
        if isinstance(e, _PtrOperand):
            raise self.error("pointer used in arithmetic")
        return e

    def parse_atom(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Lit(int(t.text))
        if self.accept("true"):
            return Lit(True)
        if self.accept("false"):
            return Lit(False)
        if self.accept("nil"):
            return _PtrOperand(None, None)
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.i += 1
            self.check_declared(t)
            if self.is_pointer(t.text):
                if self.accept("->"):
                    fld = self.ident_or_data()
                    if fld.text == "data":
                        raise self.error("read pointer data with a separate `d := p->data` statement", fld)
                    self.use_field(fld)
                    return _PtrOperand(t.text, fld.text)
                return _PtrOperand(t.text, None)
            return Name(t.text)
        raise self.error(f"unexpected {t.text or 'end of input'!r} in expression")

    def parse(self):
        self.parse_decls()
        if not self.pointers:
            raise self.error("a program declares at least one pointer variable")
        body = self.parse_block(set())
        return body


@dataclass(frozen=True)
class _PtrOperand:
    var: Optional[str]
    field: Optional[str]


def _assign_labels(body):
    """Give unlabeled statements fresh integer labels in textual order."""
    explicit = [s.label for s in walk(body) if s.label is not None]
    counter = [max(explicit) + 1 if explicit else 0]

    def fix(seq):
        out = []
        for s in seq:
            if s.label is None:
                s = replace(s, label=counter[0])
                counter[0] += 1
            if isinstance(s, If):
                s = replace(s, then_body=fix(s.then_body), else_body=fix(s.else_body))
            elif isinstance(s, While):
                s = replace(s, body=fix(s.body))
            out.append(s)
        return tuple(out)

    return fix(body)


def parse_program(text, pointer_fields=None):
    """Parse concrete syntax into a Program.

    `pointer_fields` fixes the order of PF; otherwise a `fields` declaration is
    used, falling back to the order in which fields first appear.
    """
    parser = _Parser(text)
    if pointer_fields is not None:
        parser.fields = list(pointer_fields)
        parser.fields_declared = True
    body = parser.parse()
    body = _assign_labels(body)
    return build_program(parser.pointers, parser.data, parser.fields, body)


# ---------------------------------------------------------------------------
# Pretty printing


def format_expr(e, top=True):
    if isinstance(e, Lit):
        if isinstance(e.value, bool):
            return "true" if e.value else "false"
        return str(e.value) if e.value >= 0 else f"-{-e.value}"
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, HeapAtom):
        lhs = e.lhs + (f"->{e.field}" if e.field else "")
        return f"{lhs} = {e.rhs if e.rhs is not None else 'nil'}"
    if e.op == "not":
        inner = e.args[0]
        if isinstance(inner, HeapAtom):
            return format_expr(inner).replace(" = ", " != ", 1)
        return f"!({format_expr(inner, False)})" if not isinstance(inner, (Name, Lit)) else f"!{format_expr(inner)}"
    if e.op == "neg":
        return f"-({format_expr(e.args[0], False)})"
    sym = {"and": "&&", "or": "||"}.get(e.op, e.op)
    text = f"{format_expr(e.args[0], False)} {sym} {format_expr(e.args[1], False)}"
    return text if top else f"({text})"


def _format_stmt(s, indent, out):
    pad = "  " * indent
    lbl = f"{s.label}: "
    if isinstance(s, Skip):
        out.append(f"{pad}{lbl}skip;")
    elif isinstance(s, Exit):
        out.append(f"{pad}{lbl}exit;")
    elif isinstance(s, Assign):
        out.append(f"{pad}{lbl}{s.var} := {format_expr(s.expr)};")
    elif isinstance(s, PtrNil):
        out.append(f"{pad}{lbl}{s.var} := nil;")
    elif isinstance(s, PtrCopy):
        out.append(f"{pad}{lbl}{s.var} := {s.source};")
    elif isinstance(s, PtrRead):
        out.append(f"{pad}{lbl}{s.var} := {s.source}->{s.field};")
    elif isinstance(s, FieldNil):
        out.append(f"{pad}{lbl}{s.var}->{s.field} := nil;")
    elif isinstance(s, FieldWrite):
        out.append(f"{pad}{lbl}{s.var}->{s.field} := {s.source};")
    elif isinstance(s, DataWrite):
        out.append(f"{pad}{lbl}{s.var}->data := {format_expr(s.expr)};")
    elif isinstance(s, DataRead):
        out.append(f"{pad}{lbl}{s.var} := {s.source}->data;")
    elif isinstance(s, New):
        out.append(f"{pad}{lbl}new {s.var};")
    elif isinstance(s, Free):
        out.append(f"{pad}{lbl}free {s.var};")
    elif isinstance(s, If):
        out.append(f"{pad}{lbl}if ({format_expr(s.cond)}) then")
        for c in s.then_body:
            _format_stmt(c, indent + 1, out)
        if s.else_body:
            out.append(f"{pad}else")
            for c in s.else_body:
                _format_stmt(c, indent + 1, out)
        out.append(f"{pad}fi;")
    elif isinstance(s, While):
        out.append(f"{pad}{lbl}while ({format_expr(s.cond)}) do")
        for c in s.body:
            _format_stmt(c, indent + 1, out)
        out.append(f"{pad}od;")
    else:  # pragma: no cover
        raise TypeError(s)


def format_program(prog):
    lines = [f"pointer {', '.join(prog.pointer_vars)}"]
    if prog.pointer_fields:
        lines.append(f"fields {', '.join(prog.pointer_fields)}")
    for sort in DATA_SORTS:
        names = [n for n, s in prog.data_vars if s == sort]
        if names:
            lines.append(f"{sort} {', '.join(names)}")
    for s in prog.body:
        _format_stmt(s, 0, lines)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def add(self, kind, detail):
        self.violations.append((kind, detail))

    def kinds(self):
        return [k for k, _ in self.violations]


def expr_sort(expr, sorts):
    """Sort of a data expression ('int' or 'bool'); raises TypeError when ill-sorted."""
    if isinstance(expr, Lit):
        return "bool" if isinstance(expr.value, bool) else "int"
    if isinstance(expr, Name):
        if expr.ident not in sorts:
            raise TypeError(f"unknown data variable {expr.ident}")
        return sorts[expr.ident]
    if isinstance(expr, HeapAtom):
        return "bool"
    arg_sorts = [expr_sort(a, sorts) for a in expr.args]
    if expr.op in ARITH_OPS:
        if any(s != "int" for s in arg_sorts):
            raise TypeError(f"arithmetic on non-integers in {format_expr(expr)}")
        if expr.op == "*" and not any(_is_constant(a) for a in expr.args):
            raise TypeError(f"non-linear product in {format_expr(expr)}")
        return "int"
    if expr.op in COMPARE_OPS:
        if any(s != "int" for s in arg_sorts):
            raise TypeError(f"ordering on non-integers in {format_expr(expr)}")
        return "bool"
    if expr.op in EQ_OPS:
        if arg_sorts[0] != arg_sorts[1]:
            raise TypeError(f"equality between different sorts in {format_expr(expr)}")
        return "bool"
    if expr.op in BOOL_OPS:
        if any(s != "bool" for s in arg_sorts):
            raise TypeError(f"boolean connective on integers in {format_expr(expr)}")
        return "bool"
    raise TypeError(f"unknown operator {expr.op}")


def _is_constant(e):
    if isinstance(e, Lit):
        return True
    if isinstance(e, Op) and e.op in ARITH_OPS:
        return all(_is_constant(a) for a in e.args)
    return False


def _check_condition(expr, where, report, sorts):
    atoms = list(heap_atoms(expr))
    if atoms:
        if len(atoms) != len(list(_leaves(expr))):
            report.add("mixed condition", where)
            return
        if as_heap_condition(expr) is None:
            report.add("compound heap condition", where)
            return
        return
    try:
        if expr_sort(expr, sorts) != "bool":
            report.add("sort error", f"{where}: condition is not boolean")
    except TypeError as exc:
        report.add("sort error", f"{where}: {exc}")


def _leaves(expr):
    if isinstance(expr, Op) and expr.op in BOOL_OPS:
        for a in expr.args:
            yield from _leaves(a)
    else:
        yield expr


def validate_program(prog):
    report = ValidationReport()
    pointers = set(prog.pointer_vars)
    sorts = prog.data_sorts
    fields = set(prog.pointer_fields)

    seen = set()
    for s in walk(prog.body):
        if s.label in seen:
            report.add("duplicate label", s.label)
        seen.add(s.label)
    if prog.entry not in prog.statements:
        report.add("missing entry", prog.entry)
    if len(set(prog.pointer_vars)) != len(prog.pointer_vars) or pointers & set(sorts):
        report.add("duplicate declaration", "variables")
    for name, sort in prog.data_vars:
        if sort not in DATA_SORTS:
            report.add("sort error", f"{name} has unsupported sort {sort}")

    def need_ptr(name, where):
        if name not in pointers:
            report.add("undeclared identifier", f"{where}: pointer {name}")

    def need_field(name, where):
        if name not in fields:
            report.add("undeclared identifier", f"{where}: field {name}")

    def need_data(name, where):
        if name not in sorts:
            report.add("undeclared identifier", f"{where}: data variable {name}")

    def check_data_expr(expr, where, want):
        for n in expr_names(expr):
            if n not in sorts and n not in pointers:
                report.add("undeclared identifier", f"{where}: {n}")
                return
        try:
            got = expr_sort(expr, sorts)
        except TypeError as exc:
            report.add("sort error", f"{where}: {exc}")
            return
        if want is not None and got != want:
            report.add("sort error", f"{where}: expected {want}, got {got}")

    for s in walk(prog.body):
        where = f"label {s.label}"
        if isinstance(s, Assign):
            need_data(s.var, where)
            if any(True for _ in heap_atoms(s.expr)):
                _check_condition(s.expr, where, report, sorts)
                if sorts.get(s.var) != "bool":
                    report.add("sort error", f"{where}: heap condition assigned to non-boolean {s.var}")
            else:
                check_data_expr(s.expr, where, sorts.get(s.var))
        elif isinstance(s, (PtrNil, New, Free)):
            need_ptr(s.var, where)
        elif isinstance(s, PtrCopy):
            need_ptr(s.var, where)
            need_ptr(s.source, where)
        elif isinstance(s, PtrRead):
            need_ptr(s.var, where)
            need_ptr(s.source, where)
            need_field(s.field, where)
        elif isinstance(s, FieldNil):
            need_ptr(s.var, where)
            need_field(s.field, where)
        elif isinstance(s, FieldWrite):
            need_ptr(s.var, where)
            need_ptr(s.source, where)
            need_field(s.field, where)
        elif isinstance(s, DataWrite):
            need_ptr(s.var, where)
            check_data_expr(s.expr, where, "int")
        elif isinstance(s, DataRead):
            need_data(s.var, where)
            need_ptr(s.source, where)
            if sorts.get(s.var) != "int":
                report.add("sort error", f"{where}: node data is an int")
        elif isinstance(s, BRANCHING):
            for atom in heap_atoms(s.cond):
                need_ptr(atom.lhs, where)
                if atom.rhs is not None:
                    need_ptr(atom.rhs, where)
                if atom.field is not None:
                    need_field(atom.field, where)
            _check_condition(s.cond, where, report, sorts)

    # every path must end in exit: no statement may fall off the end
    for label, nxt in prog.succ.items():
        stmt = prog.statements[label]
        if isinstance(stmt, Exit):
            continue
        targets = nxt if isinstance(stmt, BRANCHING) else (nxt,)
        if any(t is None for t in targets):
            report.add("missing exit", f"label {label} has no successor")
    return report


# ---------------------------------------------------------------------------
# Normalization


def is_normalized(prog):
    for s in walk(prog.body):
        conds = []
        if isinstance(s, BRANCHING):
            conds.append(s.cond)
        elif isinstance(s, Assign):
            conds.append(s.expr)
        for c in conds:
            for atom in heap_atoms(c):
                if atom.field is not None or atom.rhs is None:
                    return False
    return True


def normalize_program(prog):
    """Rewrite heap conditions into p = q / !(p = q) form using fresh `$` pointers.

    The first statement of each rewritten group keeps the original label, so
    every jump into it (including loop back-edges) still lands on the prelude.
    """
    if is_normalized(prog):
        return prog
    labels = [s.label for s in walk(prog.body)]
    next_label = [max(labels) + 1]
    fresh_ptrs = []

    def fresh_label():
        l = next_label[0]
        next_label[0] += 1
        return l

    def fresh_ptr():
        name = f"{FRESH_PREFIX}r{len(fresh_ptrs)}"
        fresh_ptrs.append(name)
        return name

    def rewrite_atom(atom):
        """Return (prelude factories, normalized atom)."""
        prelude = []
        lhs, rhs = atom.lhs, atom.rhs
        if atom.field is not None:
            r = fresh_ptr()
            prelude.append(lambda lbl, r=r: PtrRead(lbl, r, atom.lhs, atom.field))
            lhs = r
        if rhs is None:
            r = fresh_ptr()
            prelude.append(lambda lbl, r=r: PtrNil(lbl, r))
            rhs = r
        return prelude, HeapAtom(lhs, None, rhs)

    def rewrite_cond(expr):
        if isinstance(expr, HeapAtom):
            return rewrite_atom(expr)
        if isinstance(expr, Op):
            prelude, args = [], []
            for a in expr.args:
                p, na = rewrite_cond(a)
                prelude += p
                args.append(na)
            return prelude, Op(expr.op, tuple(args))
        return [], expr

    def needs_refresh(prelude_factories):
        # a nil-only prelude never changes, so loops need not recompute it
        probe = [f(0) for f in prelude_factories]
        return any(not isinstance(s, PtrNil) for s in probe)

    def place(label, prelude, make_stmt):
        """Lay out prelude statements followed by the rewritten statement."""
        if not prelude:
            return [make_stmt(label)]
        out = [prelude[0](label)]
        for f in prelude[1:]:
            out.append(f(fresh_label()))
        out.append(make_stmt(fresh_label()))
        return out

    def fix(seq):
        out = []
        for s in seq:
            if isinstance(s, If):
                prelude, cond = rewrite_cond(s.cond)
                then_body, else_body = fix(s.then_body), fix(s.else_body)
                out += place(s.label, prelude, lambda l: If(l, cond, then_body, else_body))
            elif isinstance(s, While):
                prelude, cond = rewrite_cond(s.cond)
                body = fix(s.body)
                if prelude and needs_refresh(prelude):
                    # recompute the condition operands at the end of every iteration
                    body = body + tuple(f(fresh_label()) for f in prelude)
                out += place(s.label, prelude, lambda l: While(l, cond, body))
            elif is_heap_assign(s):
                prelude, expr = rewrite_cond(s.expr)
                out += place(s.label, prelude, lambda l: Assign(l, s.var, expr))
            else:
                out.append(s)
        return tuple(out)

    body = fix(prog.body)
    return build_program(
        tuple(prog.pointer_vars) + tuple(fresh_ptrs), prog.data_vars, prog.pointer_fields, body
    )

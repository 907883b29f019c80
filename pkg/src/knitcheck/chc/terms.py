"""Quantifier-free, sorted constraint terms with SMT-LIB printing and concrete evaluation.

Terms are hash-consed: structurally equal terms are the same object, so sharing is
cheap and identity comparison is structural comparison.
"""

from __future__ import annotations

BOOL = "Bool"
INT = "Int"


class SortError(TypeError):
    pass


class Term:
    __slots__ = ("op", "name", "args", "sort")

    def __init__(self, op, name, args, sort):
        self.op = op
        self.name = name
        self.args = args
        self.sort = sort

    def __repr__(self):
        return to_smt(self)

    def __bool__(self):
        raise TypeError("terms have no truth value; use is_true/is_false")


_table = {}


def _mk(op, name, args, sort):
    key = (op, name, tuple(id(a) for a in args), sort)
    t = _table.get(key)
    if t is None:
        t = _table[key] = Term(op, name, tuple(args), sort)
    return t


def const(value):
    if isinstance(value, bool):
        return _mk("const", value, (), BOOL)
    return _mk("const", int(value), (), INT)


TRUE = const(True)
FALSE = const(False)


def is_const(t):
    return t.op == "const"


def is_true(t):
    return t is TRUE


def is_false(t):
    return t is FALSE


def var(name, sort):
    return _mk("var", name, (), sort)


def app(name, args, sort):
    """Application of a declared function symbol (constructors, selectors, relations, macros)."""
    return _mk("app", name, args, sort)


def ctor(name, args, sort):
    return _mk("ctor", name, args, sort)


def sel(name, arg, sort):
    return _mk("sel", name, (arg,), sort)


def tester(name, arg):
    if arg.op == "ctor":
        return const(arg.name == name)
    return _mk("is", name, (arg,), BOOL)


def _check(t, sort):
    if t.sort != sort:
        raise SortError(f"expected {sort}, got {t.sort} in {to_smt(t)}")


def and_(*xs):
    out = []
    seen = set()
    for x in xs:
        if isinstance(x, (list, tuple)):
            x = and_(*x)
        _check(x, BOOL)
        if x is TRUE:
            continue
        if x is FALSE:
            return FALSE
        parts = x.args if x.op == "and" else (x,)
        for p in parts:
            if id(p) not in seen:
                seen.add(id(p))
                out.append(p)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return _mk("and", None, out, BOOL)


def or_(*xs):
    out = []
    seen = set()
    for x in xs:
        if isinstance(x, (list, tuple)):
            x = or_(*x)
        _check(x, BOOL)
        if x is FALSE:
            continue
        if x is TRUE:
            return TRUE
        parts = x.args if x.op == "or" else (x,)
        for p in parts:
            if id(p) not in seen:
                seen.add(id(p))
                out.append(p)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return _mk("or", None, out, BOOL)


def not_(x):
    _check(x, BOOL)
    if x is TRUE:
        return FALSE
    if x is FALSE:
        return TRUE
    if x.op == "not":
        return x.args[0]
    return _mk("not", None, (x,), BOOL)


def implies(a, b):
    _check(a, BOOL)
    _check(b, BOOL)
    if a is FALSE or b is TRUE:
        return TRUE
    if a is TRUE:
        return b
    if b is FALSE:
        return not_(a)
    return _mk("=>", None, (a, b), BOOL)


def iff(a, b):
    return eq(a, b)


def xor(a, b):
    return not_(eq(a, b))


def eq(a, b):
    if a.sort != b.sort:
        raise SortError(f"cannot compare {a.sort} with {b.sort}")
    if a is b:
        return TRUE
    if a.op == "const" and b.op == "const":
        return const(a.name == b.name)
    if a.op == "ctor" and b.op == "ctor":
        if a.name != b.name:
            return FALSE
        return and_(*(eq(x, y) for x, y in zip(a.args, b.args)))
    if a.sort == BOOL:
        if a.op == "const":
            return b if a.name else not_(b)
        if b.op == "const":
            return a if b.name else not_(a)
    return _mk("=", None, (a, b), BOOL)


def ite(c, a, b):
    _check(c, BOOL)
    if a.sort != b.sort:
        raise SortError("ite branches differ in sort")
    if c is TRUE:
        return a
    if c is FALSE:
        return b
    if a is b:
        return a
    if a.sort == BOOL:
        if a is TRUE and b is FALSE:
            return c
        if a is FALSE and b is TRUE:
            return not_(c)
    return _mk("ite", None, (c, a, b), a.sort)


def _arith(op, fold, *xs):
    for x in xs:
        _check(x, INT)
    if all(x.op == "const" for x in xs):
        return const(fold(*(x.name for x in xs)))
    return _mk(op, None, xs, INT)


def add(a, b):
    return _arith("+", lambda x, y: x + y, a, b)


def sub(a, b):
    return _arith("-", lambda x, y: x - y, a, b)


def mul(a, b):
    return _arith("*", lambda x, y: x * y, a, b)


def neg(a):
    return _arith("neg", lambda x: -x, a)


def _cmp(op, fold, a, b):
    _check(a, INT)
    _check(b, INT)
    if a.op == "const" and b.op == "const":
        return const(fold(a.name, b.name))
    return _mk(op, None, (a, b), BOOL)


def le(a, b):
    return _cmp("<=", lambda x, y: x <= y, a, b)


def lt(a, b):
    return _cmp("<", lambda x, y: x < y, a, b)


def ge(a, b):
    return _cmp(">=", lambda x, y: x >= y, a, b)


def gt(a, b):
    return _cmp(">", lambda x, y: x > y, a, b)


# ---------------------------------------------------------------------------
# printing


def smt_symbol(name):
    if name and all(c.isalnum() or c in "_.-!@#%^&*+<>=/?~" for c in name) and not name[0].isdigit():
        return name
    return "|" + name + "|"


def _head(t):
    if t.op == "neg":
        return "-"
    if t.op in ("app", "ctor", "sel", "var"):
        return smt_symbol(t.name)
    if t.op == "is":
        return f"(_ is {smt_symbol(t.name)})"
    return t.op


def to_smt(t, names=None):
    """Render a term; `names` maps subterms (by id) to symbols printed in their place."""
    out = []
    stack = [t]
    while stack:
        node = stack.pop()
        if isinstance(node, str):
            out.append(node)
        elif names is not None and id(node) in names:
            out.append(names[id(node)])
        elif node.op == "const":
            v = node.name
            if isinstance(v, bool):
                out.append("true" if v else "false")
            else:
                out.append(f"(- {-v})" if v < 0 else str(v))
        elif node.op == "var" or not node.args:
            out.append(smt_symbol(node.name))
        else:
            out.append("(" + _head(node))
            stack.append(")")
            for a in reversed(node.args):
                stack.append(a)
                stack.append(" ")
    return "".join(out)


def subterms(t):
    """All distinct subterms in post-order."""
    seen = set()
    order = []
    stack = [(t, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for a in node.args:
            stack.append((a, False))
    return order


def free_vars(t):
    return {s for s in subterms(t) if s.op == "var"}


def size(t):
    return len(subterms(t))


# ---------------------------------------------------------------------------
# evaluation


class Model:
    """Concrete interpretation of the uninterpreted parts: variables, datatypes and macros."""

    def __init__(self, env, ctors=None, selectors=None, testers=None, macros=None):
        self.env = env
        self.ctors = ctors or {}
        self.selectors = selectors or {}
        self.testers = testers or {}
        self.macros = macros or {}


def evaluate(t, model):
    """Value of t under the model; connectives short-circuit."""
    return _Evaluator(model).value(t)


_ARITH = {
    "+": lambda x, y: x + y, "-": lambda x, y: x - y, "*": lambda x, y: x * y,
    "<=": lambda x, y: x <= y, "<": lambda x, y: x < y, ">=": lambda x, y: x >= y, ">": lambda x, y: x > y,
}


class _Evaluator:
    def __init__(self, model):
        self.model = model
        self.memo = {}
        self.calls = {}

    def value(self, node):
        key = id(node)
        if key in self.memo:
            return self.memo[key]
        v = self._eval(node)
        self.memo[key] = v
        return v

    def _eval(self, node):
        op, m = node.op, self.model
        if op == "const":
            return node.name
        if op == "var":
            return m.env[node.name]
        if op == "and":
            return all(self.value(a) for a in node.args)
        if op == "or":
            return any(self.value(a) for a in node.args)
        if op == "not":
            return not self.value(node.args[0])
        if op == "=>":
            return (not self.value(node.args[0])) or self.value(node.args[1])
        if op == "ite":
            return self.value(node.args[1] if self.value(node.args[0]) else node.args[2])
        args = [self.value(a) for a in node.args]
        if op == "=":
            return args[0] == args[1]
        if op in _ARITH:
            return _ARITH[op](*args)
        if op == "neg":
            return -args[0]
        if op == "ctor":
            return m.ctors[node.name](*args)
        if op == "sel":
            return m.selectors[node.name](args[0])
        if op == "is":
            return m.testers[node.name](args[0])
        if op == "app":
            key = (node.name, tuple(id(a) for a in args))
            if key not in self.calls:
                params, body = m.macros[node.name]
                inner = Model(dict(zip(params, args)), m.ctors, m.selectors, m.testers, m.macros)
                self.calls[key] = (args, _Evaluator(inner).value(body))
            return self.calls[key][1]
        raise ValueError(f"cannot evaluate {op}")

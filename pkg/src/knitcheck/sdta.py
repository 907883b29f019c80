"""Symbolic data-tree automata: parsing, acceptance and constraint export.

Text format::

    arity 2
    state { lo: int; hi: int; ok: bool; }
    transition: <SMT-LIB term over q1.f .. qk.f, qi.nil, key, q.f, q.nil>
    final: <SMT-LIB term over q.f, q.nil>

Acceptance checks read the fields of a nil state as 0 / false. Inside Horn systems those
reads are unconstrained, so automata should guard them with the matching `.nil` test.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from importlib import resources

from . import smt
from .chc import terms as T
from .chc.terms import SortError

SORTS = {"int": T.INT, "bool": T.BOOL}
BUILTINS = ("accept_all_1", "accept_all_2", "empty_only_1", "empty_only_2", "bst")

_SECTION = re.compile(r"^\s*(arity|state|transition|final)\b", re.M)


class SDTASyntaxError(SyntaxError):
    pass


@dataclass(frozen=True)
class SDTA:
    arity: int
    state_sig: tuple  # ((name, "int" | "bool"), ...)
    transition: object  # parsed s-expression
    final: object
    name: str = "sdta"

    @property
    def alphabet_sig(self):
        return (("key", "int"),)

    def field_sort(self, f):
        return SORTS[dict(self.state_sig)[f]]

    # -- building terms ---------------------------------------------------
    def transition_term(self, resolve):
        return _build(self.transition, resolve)

    def final_term(self, resolve):
        return _build(self.final, resolve)

    def export_constraints(self, S, qs, key, q):
        """(transition and q not nil, final) over schema terms: child states qs, the node key and node state q."""
        def state(x, part):
            return S.is_qnil(x) if part == "nil" else S.qget(x, part)

        def resolve(sym):
            if sym == "key":
                return key
            owner, part = sym.split(".")
            return state(q if owner == "q" else qs[int(owner[1:]) - 1], part)

        step = T.and_(self.transition_term(resolve), T.not_(S.is_qnil(q)))
        return step, self.final_term(resolve)

    def symbols(self, which):
        return _symbols(self.transition if which == "transition" else self.final)


# ---------------------------------------------------------------------------
# parsing


def parse_sdta(text, name="sdta"):
    text = "\n".join(line.split("//")[0] for line in text.splitlines())
    marks = list(_SECTION.finditer(text))
    if not marks or text[: marks[0].start()].strip():
        raise SDTASyntaxError("expected sections arity, state, transition, final")
    sections = {}
    for i, mk in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(text)
        key = mk.group(1)
        if key in sections:
            raise SDTASyntaxError(f"duplicate section {key!r}")
        sections[key] = text[mk.end():end].strip()
    missing = {"arity", "state", "transition", "final"} - set(sections)
    if missing:
        raise SDTASyntaxError(f"missing sections: {', '.join(sorted(missing))}")
    try:
        arity = int(sections["arity"])
    except ValueError:
        raise SDTASyntaxError(f"bad arity {sections['arity']!r}") from None
    if arity < 0:
        raise SDTASyntaxError("arity must be non-negative")
    state_sig = _parse_state(sections["state"])
    transition = _parse_term(sections["transition"])
    final = _parse_term(sections["final"])
    a = SDTA(arity, state_sig, transition, final, name)
    sig = dict(state_sig)
    tsyms = {"key": T.INT}
    for owner in ["q"] + [f"q{i}" for i in range(1, arity + 1)]:
        tsyms[f"{owner}.nil"] = T.BOOL
        for f, s in sig.items():
            tsyms[f"{owner}.{f}"] = SORTS[s]
    fsyms = {s: v for s, v in tsyms.items() if s.startswith("q.")}
    for label, term, syms in (("transition", transition, tsyms), ("final", final, fsyms)):
        t = _build(term, lambda sym, syms=syms, label=label: _symbol_var(sym, syms, label))
        if t.sort != T.BOOL:
            raise SortError(f"{label} must be Bool, got {t.sort}")
    return a


def _parse_state(body):
    if not (body.startswith("{") and body.endswith("}")):
        raise SDTASyntaxError("state section must be { name: sort; ... }")
    out = []
    for decl in body[1:-1].split(";"):
        decl = decl.strip()
        if not decl:
            continue
        m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(\w+)", decl)
        if not m:
            raise SDTASyntaxError(f"bad state declaration {decl!r}")
        fname, sort = m.groups()
        if sort not in SORTS:
            raise SortError(f"unknown sort {sort!r} for state field {fname!r}")
        if fname == "nil" or fname in dict(out):
            raise SDTASyntaxError(f"bad or duplicate state field {fname!r}")
        out.append((fname, sort))
    return tuple(out)


def _parse_term(text):
    if text.startswith(":"):
        text = text[1:]
    try:
        items = smt.parse_sexprs(text)
    except (SyntaxError, ValueError) as exc:
        raise SDTASyntaxError(str(exc)) from None
    if len(items) != 1:
        raise SDTASyntaxError(f"expected one term, got {len(items)}")
    return _freeze(items[0])


def _freeze(x):
    return tuple(_freeze(a) for a in x) if isinstance(x, list) else x


def _symbols(x):
    if isinstance(x, tuple):
        out = set()
        for a in x[1:]:
            out |= _symbols(a)
        return out
    if x in ("true", "false") or re.fullmatch(r"-?\d+", x):
        return set()
    return {x}


def _symbol_var(sym, syms, label):
    if sym not in syms:
        raise SortError(f"unknown symbol {sym!r} in {label}")
    return T.var(sym, syms[sym])


_NARY = {"and": T.and_, "or": T.or_}
_BINARY = {"=>": T.implies, "<=": T.le, "<": T.lt, ">=": T.ge, ">": T.gt, "*": T.mul}


def _build(x, resolve):
    if not isinstance(x, tuple):
        if x == "true":
            return T.TRUE
        if x == "false":
            return T.FALSE
        if re.fullmatch(r"\d+", x):
            return T.const(int(x))
        return resolve(x)
    if not x:
        raise SDTASyntaxError("empty application")
    op, args = x[0], [_build(a, resolve) for a in x[1:]]
    if op in _NARY:
        return _NARY[op](*args)
    if op == "not" and len(args) == 1:
        return T.not_(args[0])
    if op in _BINARY and len(args) == 2:
        return _BINARY[op](*args)
    if op == "=" and len(args) >= 2:
        return T.and_(*(T.eq(a, b) for a, b in zip(args, args[1:])))
    if op == "distinct" and len(args) >= 2:
        return T.and_(*(T.not_(T.eq(a, b)) for a, b in itertools.combinations(args, 2)))
    if op == "ite" and len(args) == 3:
        return T.ite(*args)
    if op == "+" and args:
        out = args[0]
        for a in args[1:]:
            out = T.add(out, a)
        return out
    if op == "-" and len(args) == 1:
        return T.neg(args[0])
    if op == "-" and len(args) >= 2:
        out = args[0]
        for a in args[1:]:
            out = T.sub(out, a)
        return out
    raise SDTASyntaxError(f"unsupported operator {op!r} with {len(args)} arguments")


def builtin(name):
    if name not in BUILTINS:
        raise KeyError(f"unknown builtin automaton {name!r}; choose from {', '.join(BUILTINS)}")
    text = resources.files("knitcheck.automata").joinpath(name + ".sdta").read_text()
    return parse_sdta(text, name)


def accept_all(arity):
    return builtin(f"accept_all_{arity}")


def load(path_or_name):
    if path_or_name in BUILTINS:
        return builtin(path_or_name)
    with open(path_or_name) as fh:
        text = fh.read()
    stem = re.sub(r"\.sdta$", "", path_or_name.rsplit("/", 1)[-1])
    return parse_sdta(text, stem)


# ---------------------------------------------------------------------------
# acceptance


def _children(tree):
    addrs = set(tree.keys)
    return {a: [a + (j,) if a + (j,) in addrs else None for j in range(1, tree.arity + 1)] for a in addrs}


def acceptance_query(a, tree):
    """SMT-LIB script that is sat iff the automaton has an accepting run on the tree."""
    if tree.arity != a.arity:
        raise ValueError(f"tree arity {tree.arity} differs from automaton arity {a.arity}")
    keys = tree.keys
    decls, asserts = {}, []

    def state_var(tag, f):
        v = T.var(f"{tag}.{f}", a.field_sort(f))
        decls[v.name] = v.sort
        return v

    def node_state(addr):
        tag = "n" + "_".join(map(str, addr))
        return lambda part: T.FALSE if part == "nil" else state_var(tag, part)

    def nil_state():
        return lambda part: T.TRUE if part == "nil" else _default(a.field_sort(part))

    def resolver(states, key):
        def resolve(sym):
            if sym == "key":
                return key
            owner, part = sym.split(".")
            return states[owner](part)
        return resolve

    for addr, kids in _children(tree).items():
        states = {"q": node_state(addr)}
        for j, c in enumerate(kids, start=1):
            states[f"q{j}"] = node_state(c) if c is not None else nil_state()
        asserts.append(a.transition_term(resolver(states, T.const(keys[addr]))))
    root = node_state(()) if keys else nil_state()
    asserts.append(a.final_term(resolver({"q": root}, None)))
    lines = ["(set-logic ALL)"]
    lines += [f"(declare-const {T.smt_symbol(n)} {s})" for n, s in sorted(decls.items())]
    lines += [f"(assert {T.to_smt(t)})" for t in asserts]
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def _default(sort):
    return T.FALSE if sort == T.BOOL else T.const(0)


def accepts(a, tree, timeout=30.0, solver=None):
    r = smt.solve(acceptance_query(a, tree), timeout, solver)
    if r.status == smt.SAT:
        return True
    if r.status == smt.UNSAT:
        return False
    raise smt.SolverUnavailable(f"acceptance query undecided: {r}")


def enumerate_runs(a, tree, int_domain):
    """States reachable at the root by explicit enumeration over a finite integer domain.

    Returns the set of root states (tuples in state_sig order, or None for the empty tree)
    admitted by the final constraint.
    """
    fields = [f for f, _ in a.state_sig]
    domains = [int_domain if s == "int" else (False, True) for _, s in a.state_sig]
    universe = [tuple(v) for v in itertools.product(*domains)]
    nil_fillers = [tuple(_default(SORTS[s]).name for _, s in a.state_sig)]
    keys = tree.keys
    kids = _children(tree)

    def as_resolver(states, key):
        def resolve(sym):
            if sym == "key":
                return T.const(key)
            owner, part = sym.split(".")
            st = states[owner]
            if part == "nil":
                return T.const(st[0])
            return T.const(st[1][fields.index(part)])
        return resolve

    reach = {}
    for addr in sorted(keys, key=len, reverse=True):
        options = [[(False, s) for s in reach[c]] if c is not None else [(True, s) for s in nil_fillers]
                   for c in kids[addr]]
        found = set()
        for combo in itertools.product(*options):
            for cand in universe:
                if cand in found:
                    continue
                states = {f"q{j}": st for j, st in enumerate(combo, start=1)}
                states["q"] = (False, cand)
                if a.transition_term(as_resolver(states, keys[addr])) is T.TRUE:
                    found.add(cand)
        reach[addr] = found
    if not keys:
        roots = [(True, s) for s in nil_fillers]
    else:
        roots = [(False, s) for s in reach[()]]
    return {st[1] for st in roots if a.final_term(as_resolver({"q": st}, 0)) is T.TRUE}


def accepts_by_enumeration(a, tree, int_domain):
    return bool(enumerate_runs(a, tree, int_domain))

"""Horn clause systems over the knitted-tree label relation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .. import kt, lang
from . import terms as T
from .predicates import PredicateLibrary
from .schema import LOG, QHAT


class EmptyExitSet(ValueError):
    pass


class ArityMismatch(ValueError):
    pass


class ParamMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RelationApp:
    name: str
    args: tuple  # terms


@dataclass(frozen=True)
class CHC:
    head: object  # RelationApp, or None for a query
    body_constraint: T.Term
    body_atoms: tuple = ()
    tag: str = ""

    @property
    def is_query(self):
        return self.head is None

    def variables(self):
        seen = {}
        for atom in ((self.head,) if self.head else ()) + tuple(self.body_atoms):
            for a in atom.args:
                for v in T.free_vars(a):
                    seen.setdefault(v.name, v)
        for v in T.free_vars(self.body_constraint):
            seen.setdefault(v.name, v)
        return [seen[k] for k in sorted(seen)]


@dataclass
class CHCSystem:
    lib: PredicateLibrary
    relations: dict  # name -> list of sorts
    clauses: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def schema(self):
        return self.lib.S

    @property
    def queries(self):
        return [c for c in self.clauses if c.is_query]

    def used_macros(self):
        names = set()
        for c in self.clauses:
            for t in T.subterms(c.body_constraint):
                if t.op == "app" and t.name in self.lib.macros:
                    names.add(t.name)
        return sorted(names, key=_macro_order)

    def extended(self, clauses, relations=None, **params):
        rel = dict(self.relations)
        rel.update(relations or {})
        p = dict(self.params)
        p.update(params)
        return CHCSystem(self.lib, rel, list(self.clauses) + list(clauses), p)


def _macro_order(name):
    parts = name.split("_")
    return (parts[1], tuple(int(x) for x in parts[2:]))


def program_digest(prog):
    return hashlib.sha256(lang.format_program(prog).encode()).hexdigest()[:16]


def build_predicates(prog, k, m, n, state_sig=None):
    return PredicateLibrary(prog, k, m, n, state_sig)


def _lab(t):
    return RelationApp("Lab", (t,))


def _truncation(lib, theta, sigma, i):
    """θ = σ^{<i}: equal frames below i, available frames from i on."""
    S = lib.S
    parts = [T.eq(S.frame(theta, l), S.frame(sigma, l)) for l in range(1, i)]
    parts += [S.get(S.frame(theta, l), "avail") for l in range(i, lib.n + 2)]
    return T.and_(*parts)


def _kt_clauses(lib):
    n, width = lib.n, lib.k + lib.m
    s, t, th = lib.log_var("s"), lib.log_var("t"), lib.log_var("th")
    sv, tv = lib.view(s), lib.view(t)
    out = [
        CHC(_lab(s), T.and_(lib.len_(sv, 1), lib.first_frame(lib.S.frame(s, 1))), (), "I"),
        CHC(_lab(s), T.and_(lib.len_(sv, 2), lib.start(sv)), (), "II"),
    ]
    # frame 1 is not on the lace, so internal and upward steps produce frames 3..n+1
    for i in range(3, n + 2):
        body = T.and_(lib.len_(sv, i), _truncation(lib, th, s, i), lib.step_in_place(i - 1, s))
        out.append(CHC(_lab(s), body, (_lab(th),), f"III.{i}"))
    for i in range(3, n + 2):
        for j in range(1, width + 1):
            thv = lib.view(th, i - 1)
            steps = [T.and_(lib.len_(tv, a), lib.step_up(a, i, j, t, s)) for a in range(2, n + 1)]
            body = T.and_(
                lib.len_(sv, i), _truncation(lib, th, s, i), T.not_(lib.S.get(lib.S.frame(th, i - 1), "avail")),
                lib.consistent_child(tv, j, thv), T.or_(*steps),
            )
            out.append(CHC(_lab(s), body, (_lab(th), _lab(t)), f"IV.{i}.{j}"))
    for i in range(2, n + 2):
        for j in range(1, width + 1):
            thv = lib.view(th, i - 1)
            steps = [T.and_(lib.len_(sv, a), lib.step_down(a, i, j, s, t)) for a in range(2, n + 1)]
            body = T.and_(
                lib.len_(tv, i), _truncation(lib, th, t, i), T.not_(lib.S.get(lib.S.frame(th, i - 1), "avail")),
                lib.consistent_child(thv, j, sv), T.or_(*steps),
            )
            out.append(CHC(_lab(t), body, (_lab(s), _lab(th)), f"V.{i}.{j}"))
    return out


def build_ckt(prog, k, m, n, state_sig=None):
    lib = build_predicates(prog, k, m, n, state_sig)
    params = {"k": k, "m": m, "n": n, "program": program_digest(prog)}
    return CHCSystem(lib, {"Lab": [LOG]}, _kt_clauses(lib), params)


def _check_ex(ex_set):
    ex = set(ex_set)
    if not ex or kt.Status.NONE in ex or not ex <= set("CEOM"):
        raise EmptyExitSet(f"exit set must be a non-empty subset of C, E, O, M; got {sorted(ex)}")
    return ex


def build_cex(prog, k, m, n, ex_set):
    ex = _check_ex(ex_set)
    base = build_ckt(prog, k, m, n)
    lib = base.lib
    s = lib.log_var("s")
    query = CHC(None, lib.label_exit(lib.view(s), ex), (_lab(s),), "VI")
    return base.extended([query], ex="".join(sorted(ex)))


def build_cpre(prog, k, m, n, ex_set, automaton):
    ex = _check_ex(ex_set)
    if automaton.arity != k:
        raise ArityMismatch(f"automaton arity {automaton.arity} differs from k={k}")
    base = build_ckt(prog, k, m, n, automaton.state_sig)
    lib = base.lib
    S = lib.S
    width = k + m
    s = lib.log_var("s")
    sv = lib.view(s)
    q, e = T.var("q", QHAT), T.var("e", T.BOOL)
    exit_here = lib.label_exit(sv, ex)
    leaves = CHC(
        RelationApp("Pre", (s, q, e)),
        T.and_(
            T.not_(S.get(S.frame(s, 1), "active")), T.not_(lib.start(sv)), S.is_qnil(q),
            T.eq(e, exit_here),
        ),
        (_lab(s),),
        "i",
    )
    kids = [lib.log_var(f"t{j}") for j in range(1, width + 1)]
    qs = [T.var(f"q{j}", QHAT) for j in range(1, width + 1)]
    es = [T.var(f"e{j}", T.BOOL) for j in range(1, width + 1)]
    step, _ = automaton.export_constraints(S, qs[:k], S.get(S.frame(s, 1), "key"), q)
    f1_active = S.get(S.frame(s, 1), "active")
    internal = CHC(
        RelationApp("Pre", (s, q, e)),
        T.and_(
            *(lib.consistent_child(lib.view(kids[j]), j + 1, sv) for j in range(width)),
            T.or_(T.and_(f1_active, step), T.and_(T.not_(f1_active), S.is_qnil(q))),
            T.eq(e, T.or_(*es, exit_here)),
        ),
        (_lab(s),) + tuple(RelationApp("Pre", (kids[j], qs[j], es[j])) for j in range(width)),
        "ii",
    )
    _, final = automaton.export_constraints(S, qs[:k], S.get(S.frame(s, 1), "key"), q)
    root = CHC(None, T.and_(lib.start(sv), e, final), (RelationApp("Pre", (s, q, e)),), "iii")
    return base.extended(
        [leaves, internal, root], {"Pre": [LOG, QHAT, T.BOOL]}, ex="".join(sorted(ex)), pre=automaton.name
    )


def log_equals(lib, x, log, mask_top_next=True):
    """Field-wise equality of the log term x with a concrete log."""
    S = lib.S
    top = max((i for i, f in enumerate(log, start=1) if not f.avail), default=0)
    parts = []
    for i, fr in enumerate(log, start=1):
        ft = S.frame(x, i)
        for name, sort, get in S.frame_fields:
            if mask_top_next and i == top and name in ("next_dir", "next_idx"):
                continue
            value = get(fr)
            if name in ("next_dir", "prev_dir"):
                c = S.dir(value)
            elif name == "instr":
                c = S.instr_const(value)
            else:
                c = T.const(value)
            parts.append(T.eq(S.get(ft, name), c))
    return T.and_(*parts)


def build_membership_query(base, sigma, params=None):
    if params is not None and any(base.params.get(k) != v for k, v in params.items()):
        raise ParamMismatch(f"system parameters {base.params} do not match {params}")
    if len(sigma) != base.lib.n + 1:
        raise ParamMismatch(f"log has {len(sigma)} frames, expected {base.lib.n + 1}")
    if base.queries:
        raise ParamMismatch("membership queries extend a system without queries")
    x = base.lib.log_var("x")
    query = CHC(None, log_equals(base.lib, x, sigma), (_lab(x),), "member")
    return base.extended([query])

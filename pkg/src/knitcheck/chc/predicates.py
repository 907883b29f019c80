"""Constraint predicates over frames and logs that recognise knitted-tree labels."""

from __future__ import annotations

from .. import kt, lang
from ..lang import (
    Assign, DataRead, DataWrite, Exit, FieldNil, FieldWrite, Free, If, Lit, Name, New, Op,
    PtrCopy, PtrNil, PtrRead, Skip, While,
)
from . import terms as T
from .schema import DIR, FRAME, LOG, Schema

ANY = object()


class LogView:
    """A log term together with its length when the enclosing clause pins it down.

    With a known length L, avail^i folds to a constant for i >= 2; frame 1 is never folded.
    """

    def __init__(self, lib, term, length=None):
        self.lib = lib
        self.term = term
        self.length = length

    def frame(self, i):
        return self.lib.S.frame(self.term, i)

    def avail(self, i):
        if self.length is not None and i >= 2:
            return T.const(i > self.length)
        return self.lib.S.get(self.frame(i), "avail")

    def unavail(self, i):
        return T.not_(self.avail(i))


class Ctx:
    """Direction of a lace step from the old frame's node to the new frame's node."""

    def __init__(self, kind, j=None):
        self.kind = kind
        self.j = j
        if kind == "self":
            self.dir, self.back = kt.SELF, kt.SELF
        elif kind == "down":
            self.dir, self.back = j, kt.UP
        else:
            self.dir, self.back = kt.UP, j


SELF_CTX = Ctx("self")


class PredicateLibrary:
    def __init__(self, prog, k, m, n, state_sig=None):
        if not lang.is_normalized(prog):
            raise lang.LangError("program must be normalized")
        self.prog = prog
        self.k, self.m, self.n = k, m, n
        self.S = Schema(prog, k, m, n, state_sig)
        self.macros = {}
        self._macro_terms = {}
        self.labels = sorted(prog.statements)
        self.exits = [l for l in self.labels if isinstance(prog.statements[l], Exit)]

    # helpers -------------------------------------------------------------
    def g(self, frame, name):
        return self.S.get(frame, name)

    def view(self, term, length=None):
        return LogView(self, term, length)

    def log_var(self, name):
        return T.var(name, LOG)

    def dir_is(self, frame, which, d, idx=None):
        out = T.eq(self.g(frame, which + "_dir"), self.S.dir(d))
        if idx is not None:
            out = T.and_(out, T.eq(self.g(frame, which + "_idx"), _int(idx)))
        return out

    def expr(self, e, frame):
        if isinstance(e, Lit):
            return T.const(e.value)
        if isinstance(e, Name):
            return self.g(frame, self.S.d_name(e.ident))
        a = [self.expr(x, frame) for x in e.args]
        ops = {
            "+": T.add, "-": T.sub, "*": T.mul, "<": T.lt, "<=": T.le, ">": T.gt, ">=": T.ge,
            "=": T.eq, "and": T.and_, "or": T.or_, "=>": T.implies,
        }
        if e.op == "neg":
            return T.neg(a[0])
        if e.op == "not":
            return T.not_(a[0])
        if e.op == "!=":
            return T.not_(T.eq(*a))
        return ops[e.op](*a)

    # lengths and frame classification ------------------------------------
    def len_(self, v, i):
        parts = [v.unavail(i)] + [v.avail(j) for j in range(i + 1, self.n + 2)]
        return T.and_(*parts)

    def first_frame(self, f):
        aux = range(self.k + 1, self.k + self.m + 1)
        act = self.g(f, "active")
        return T.or_(
            T.and_(act, *(T.not_(self.g(f, self.S.ac_name(j))) for j in aux)),
            T.and_(T.not_(act), *(self.g(f, self.S.ac_name(j)) for j in aux)),
        )

    def initial(self, v):
        return T.and_(v.unavail(2), self.dir_is(v.frame(2), "prev", kt.SELF, 2))

    def start(self, v):
        f1, f2 = v.frame(1), v.frame(2)
        S, root = self.S, self.prog.root_var
        others = [self.g(f2, S.isnil_name(p)) for p in self.prog.pointer_vars if p != root]
        aux = range(self.k + 1, self.k + self.m + 1)
        nonempty = T.and_(
            self.g(f1, "active"), T.eq(self.g(f2, "instr"), S.here(root)),
            T.not_(self.g(f2, S.isnil_name(root))),
            *(T.not_(self.g(f2, S.ac_name(j))) for j in aux),
        )
        empty = T.and_(
            T.not_(self.g(f1, "active")), T.eq(self.g(f2, "instr"), S.nop()),
            self.g(f2, S.isnil_name(root)),
            *(T.not_(self.g(f2, S.ac_name(j))) for j in range(1, S.width + 1)),
        )
        return T.and_(
            self.initial(v),
            T.eq(self.g(f2, "active"), self.g(f1, "active")),
            T.eq(self.g(f2, "key"), self.g(f1, "key")),
            T.eq(self.g(f2, "pc"), T.const(self.prog.entry)),
            *others,
            T.or_(nonempty, empty),
        )

    def at_exit(self, f):
        pc = self.g(f, "pc")
        return T.or_(*(T.eq(pc, T.const(l)) for l in self.exits))

    def frame_exit_is(self, f, status):
        ins = self.g(f, "instr")
        c = self.at_exit(f)
        if status == kt.Status.CLEAN:
            return c
        e = T.and_(T.not_(c), T.eq(ins, self.S.err()))
        if status == kt.Status.ERROR:
            return e
        mm = T.and_(T.not_(c), T.eq(ins, self.S.oom()))
        if status == kt.Status.OOM:
            return mm
        return T.and_(T.not_(c), T.not_(T.eq(ins, self.S.err())), T.not_(T.eq(ins, self.S.oom())))

    def continues(self, f):
        return T.and_(T.not_(self.g(f, "avail")), self.frame_exit_is(f, kt.Status.NONE))

    def label_exit_is(self, v, status):
        if status == kt.Status.OVERFLOW:
            return v.unavail(self.n + 1)
        if status == kt.Status.NONE:
            return T.and_(*(T.not_(self.label_exit_is(v, s)) for s in "CEMO"))
        return T.or_(*(
            T.and_(v.unavail(i), self.frame_exit_is(v.frame(i), status)) for i in range(2, self.n + 1)
        ))

    def label_exit(self, v, ex):
        return T.or_(*(self.label_exit_is(v, s) for s in sorted(ex)))

    # parent/child consistency --------------------------------------------
    def consistent_first_frames(self, tv, j, sv):
        sa, ta = self.g(sv.frame(1), "active"), self.g(tv.frame(1), "active")
        return T.and_(
            T.or_(self.initial(sv), sa),
            T.implies(ta, sa),
            T.not_(ta) if j > self.k else T.TRUE,
            T.eq(self.g(sv.frame(1), self.S.ac_name(j)), ta),
        )

    def consistent_child(self, tv, j, sv):
        n = self.n
        parts = [self.consistent_first_frames(tv, j, sv)]
        for a in range(2, n + 1):
            for b in range(2, n + 2):
                down = T.or_(
                    T.and_(sv.unavail(a), self.dir_is(sv.frame(a), "next", j, b), tv.unavail(b)),
                    T.and_(tv.unavail(b), self.dir_is(tv.frame(b), "prev", kt.UP, a)),
                )
                parts.append(T.implies(down, self.step_down(a, b, j, sv.term, tv.term)))
        for a in range(2, n + 1):
            for b in range(2, n + 2):
                up = T.or_(
                    T.and_(tv.unavail(a), self.dir_is(tv.frame(a), "next", kt.UP, b), sv.unavail(b)),
                    T.and_(sv.unavail(b), self.dir_is(sv.frame(b), "prev", j, a)),
                )
                parts.append(T.implies(up, self.step_up(a, b, j, tv.term, sv.term)))
        return T.and_(*parts)

    # lace steps as macros ----------------------------------------------------
    def _macro(self, name, params, build):
        if name not in self.macros:
            body = build(*(T.var(p, LOG) for p in params))
            self.macros[name] = (list(params), body)
        return name

    def macro_call(self, name, *args):
        return T.app(name, tuple(args), T.BOOL)

    def step_in_place(self, a, log):
        """Frame a+1 of `log` follows frame a of the same log."""
        name = self._macro(f"step_in_{a}", ["x"], lambda x: self.step_in_place_body(a, x))
        return self.macro_call(name, log)

    def step_down(self, a, b, j, parent, child):
        """Frame b of `child` (the j-th child) follows frame a of `parent`."""
        name = self._macro(f"step_down_{a}_{b}_{j}", ["x", "y"], lambda x, y: self.step_down_body(a, b, j, x, y))
        return self.macro_call(name, parent, child)

    def step_up(self, a, b, j, child, parent):
        """Frame b of `parent` follows frame a of its j-th child `child`."""
        name = self._macro(f"step_up_{a}_{b}_{j}", ["x", "y"], lambda x, y: self.step_up_body(a, b, j, x, y))
        return self.macro_call(name, child, parent)

    def step_in_place_body(self, a, x):
        S = self.S
        fr = lambda i: S.frame(x, i)
        f = fr(a + 1)
        return T.and_(
            T.not_(self.g(fr(a), "avail")),
            self.continues(fr(a)),
            self.dir_is(fr(a), "next", kt.SELF, a + 1),
            self.dir_is(f, "prev", kt.SELF, a),
            self.step(fr, a, fr, a + 1, SELF_CTX),
            *(T.not_(self.g(f, S.upd_name(p))) for p in self.prog.pointer_vars),
        )

    def step_down_body(self, a, b, j, x, y):
        S = self.S
        s = lambda i: S.frame(x, i)
        t = lambda i: S.frame(y, i)
        f = t(b)
        return T.and_(
            T.not_(self.g(s(a), "avail")),
            self.continues(s(a)),
            self.dir_is(s(a), "next", j, b),
            T.not_(self.g(t(b - 1), "avail")),
            self.dir_is(f, "prev", kt.UP, a),
            self.step(s, a, t, b, Ctx("down", j)),
            self._upd_flags(s, a, t, b, f, kt.UP),
        )

    def step_up_body(self, a, b, j, x, y):
        S = self.S
        s = lambda i: S.frame(x, i)
        t = lambda i: S.frame(y, i)
        f = t(b)
        return T.and_(
            T.not_(self.g(s(a), "avail")),
            self.continues(s(a)),
            self.dir_is(s(a), "next", kt.UP, b),
            T.not_(self.g(t(b - 1), "avail")),
            self.dir_is(f, "prev", j, a),
            self.step(s, a, t, b, Ctx("up", j)),
            self._upd_flags(s, a, t, b, f, j),
        )

    def _upd_flags(self, s, a, t, b, f, left_dir):
        """upd_p on the new frame: p was reassigned since the new frame's node was left."""
        S = self.S
        parts = []
        for p in self.prog.pointer_vars:
            if b <= 2:
                marked = T.FALSE
            else:
                cases = []
                for a1 in range(2, a + 1):
                    seen = T.or_(
                        *(T.eq(self.g(s(c), "instr"), S.here(p)) for c in range(a1, a + 1)),
                        *(self.g(s(c), S.upd_name(p)) for c in range(a1 + 1, a + 1)),
                    )
                    cases.append(T.and_(self.dir_is(t(b - 1), "next", left_dir, a1), seen))
                marked = T.and_(T.not_(self.g(f, S.isnil_name(p))), T.or_(*cases))
            parts.append(T.eq(self.g(f, S.upd_name(p)), marked))
        return T.and_(*parts)

    # single step ----------------------------------------------------------------
    def step(self, s, a, t, b, ctx):
        """Frame t(b) is the correct successor of frame s(a) for the statement at s(a).pc."""
        st = _Step(self, s, a, t, b, ctx)
        pc = self.g(s(a), "pc")
        parts = []
        for label in self.labels:
            stmt = self.prog.statements[label]
            if isinstance(stmt, Exit):
                continue
            parts.append(T.implies(T.eq(pc, T.const(label)), st.statement(stmt)))
        return T.and_(*parts)

    # concrete evaluation ------------------------------------------------------
    def evaluate(self, term, env):
        return T.evaluate(term, self.S.model(env, self.macros))


class _Step:
    """Builds step(σ, a; τ, b) for one context; s and t map positions to frame terms."""

    def __init__(self, lib, s, a, t, b, ctx):
        self.lib, self.S = lib, lib.S
        self.s, self.a, self.t, self.b, self.ctx = s, a, t, b, ctx
        self.fa, self.f, self.fb = s(a), t(b), t(b - 1)
        self._ph = {}

    def g(self, frame, name):
        return self.S.get(frame, name)

    def isnil(self, p, frame=None):
        return self.g(self.fa if frame is None else frame, self.S.isnil_name(p))

    def succ(self, branch=None):
        return lang.successor(self.lib.prog, self.pc_label, branch)

    # frame construction ------------------------------------------------------
    def push(self, fprev, fbelow, pc=None, instr=None, isnil=None, d=None, key=None, active=None):
        S, f, g = self.S, self.f, self.g
        parts = [
            T.not_(g(f, "avail")),
            T.eq(g(f, "active"), g(fbelow, "active") if active is None else active),
            T.eq(g(f, "key"), g(fbelow, "key") if key is None else key),
            T.eq(g(f, "pc"), g(fprev, "pc") if pc is None else _int(pc)),
        ]
        for name, _ in self.lib.prog.data_vars:
            fld = S.d_name(name)
            value = (d or {}).get(name)
            parts.append(T.eq(g(f, fld), g(fprev, fld) if value is None else value))
        for p in self.lib.prog.pointer_vars:
            fld = S.isnil_name(p)
            value = (isnil or {}).get(p)
            parts.append(T.eq(g(f, fld), g(fprev, fld) if value is None else value))
        if instr is not ANY:
            parts.append(T.eq(g(f, "instr"), S.nop() if instr is None else instr))
        back = self.ctx.back
        for i in range(1, S.width + 1):
            src = g(fprev, "active") if back == i else g(fbelow, S.ac_name(i))
            parts.append(T.eq(g(f, S.ac_name(i)), src))
        return T.and_(*parts)

    def local(self, **kw):
        if self.ctx.dir != kt.SELF:
            return T.FALSE
        return self.push(self.fa, self.fa, **kw)

    def error(self):
        return self.local(instr=self.S.err())

    def set_ptr_here(self, p):
        return self.local(pc=self.succ(), instr=self.S.here(p), isnil={p: T.FALSE})

    # log queries -------------------------------------------------------------
    def points_here(self, c, q):
        key = (c, q)
        if key not in self._ph:
            if c < 2:
                out = T.FALSE
            else:
                fc = self.s(c)
                out = T.or_(
                    T.eq(self.g(fc, "instr"), self.S.here(q)),
                    T.and_(T.not_(self.g(fc, self.S.upd_name(q))), self.points_here(c - 1, q)),
                )
            self._ph[key] = out
        return self._ph[key]

    def rewind_pos_cases(self):
        """(condition, a') pairs for a' = cur_rewind_pos(σ, a)."""
        ins = self.g(self.fa, "instr")
        isr = self.S.is_rwd(ins)
        out = [(T.not_(isr), self.a)]
        for c in range(2, self.a):
            out.append((T.and_(isr, T.eq(self.S.rwd_idx(ins), T.const(c))), c))
        return out

    def last_upd_cases(self, a1, ptrs):
        """(condition, a'') pairs for a'' = max over ptrs of last_upd(σ, a', p)."""
        S = self.S
        upd = lambda c: T.or_(*(self.g(self.s(c), S.upd_name(p)) for p in ptrs))
        out = []
        for c in range(a1, 2, -1):
            out.append((T.and_(upd(c), *(T.not_(upd(x)) for x in range(c + 1, a1 + 1))), c))
        out.append((T.and_(*(T.not_(upd(x)) for x in range(3, a1 + 1))), 2))
        return out

    def hop(self, pos_cases, blocked, ptrs, instr_of):
        """Push a rewinding frame on the neighbour reached through σ^{a''}.prev."""
        ctx = self.ctx
        if ctx.dir == kt.SELF:
            return T.FALSE
        S, g = self.S, self.g
        options = []
        for cond, a1 in pos_cases:
            inner = []
            for cond2, a2 in self.last_upd_cases(a1, ptrs):
                fa2 = self.s(a2)
                targets = []
                for b1 in range(2, self.b):
                    targets.append(T.and_(
                        T.eq(g(fa2, "prev_idx"), T.const(b1)),
                        T.eq(g(self.t(b1), "next_dir"), S.dir(ctx.back)),
                        T.eq(g(self.t(b1), "next_idx"), T.const(a2)),
                        T.eq(g(self.f, "instr"), instr_of(b1)),
                    ))
                inner.append(T.and_(cond2, T.eq(g(fa2, "prev_dir"), S.dir(ctx.dir)), T.or_(*targets)))
            options.append(T.and_(cond, blocked(a1), T.or_(*inner)))
        return T.and_(T.or_(*options), self.push(self.fa, self.fb, instr=ANY))

    def rewind(self, q):
        return T.and_(
            T.not_(self.isnil(q)),
            self.hop(self.rewind_pos_cases(), lambda a1: T.not_(self.points_here(a1, q)), [q], self.S.rwd),
        )

    def rewind2(self, p, q):
        blocked = lambda a1: T.and_(T.not_(self.points_here(a1, p)), T.not_(self.points_here(a1, q)))
        return T.and_(
            T.not_(self.isnil(p)), T.not_(self.isnil(q)),
            self.hop(self.rewind_pos_cases(), blocked, [p, q], self.S.rwd),
        )

    def rewind_special(self, r, pos_cases):
        return self.hop(
            pos_cases, lambda a1: T.not_(self.points_here(a1, r)), [r], lambda b1: self.S.rwdp(r, b1)
        )

    def stop_rewind(self, q):
        return T.and_(
            T.not_(self.isnil(q)),
            T.or_(*(T.and_(c, self.points_here(a1, q)) for c, a1 in self.rewind_pos_cases())),
        )

    def stop_rewind2(self, p, q):
        return T.or_(self.stop_rewind(p), self.stop_rewind(q))

    def equal_after_rewind(self, p, q):
        return T.or_(*(
            T.and_(c, self.points_here(a1, p), self.points_here(a1, q)) for c, a1 in self.rewind_pos_cases()
        ))

    def find_or_fail(self, p):
        return T.or_(T.and_(self.isnil(p), self.error()), self.rewind(p))

    def writes_field(self, frame, fname):
        ins = self.g(frame, "instr")
        return T.or_(
            T.eq(ins, self.S.fnil(fname)),
            *(T.eq(ins, self.S.fassign(fname, r)) for r in self.lib.prog.pointer_vars),
        )

    def untouched_after(self, i, fname):
        return T.and_(*(T.not_(self.writes_field(self.s(c), fname)) for c in range(i + 1, self.a + 1)))

    def pfield_nil(self, fname):
        return T.or_(*(
            T.and_(T.eq(self.g(self.s(i), "instr"), self.S.fnil(fname)), self.untouched_after(i, fname))
            for i in range(2, self.a + 1)
        ))

    def pfield_ptr(self, fname, r, i):
        return T.and_(T.eq(self.g(self.s(i), "instr"), self.S.fassign(fname, r)), self.untouched_after(i, fname))

    def pfield_implicit(self, fname):
        return self.untouched_after(1, fname)

    # statements ------------------------------------------------------------------
    def statement(self, stmt):
        self.pc_label = stmt.label
        S = self.S
        if isinstance(stmt, Skip):
            return self.local(pc=self.succ())
        if isinstance(stmt, PtrNil):
            return self.local(pc=self.succ(), isnil={stmt.var: T.TRUE})
        if isinstance(stmt, PtrCopy):
            p, q = stmt.var, stmt.source
            return T.or_(
                T.and_(self.isnil(q), self.local(pc=self.succ(), isnil={p: T.TRUE})),
                self.rewind(q),
                T.and_(self.stop_rewind(q), self.set_ptr_here(p)),
            )
        if isinstance(stmt, (FieldNil, FieldWrite)):
            p = stmt.var
            if isinstance(stmt, FieldWrite):
                instr = T.ite(self.isnil(stmt.source), S.fnil(stmt.field), S.fassign(stmt.field, stmt.source))
            else:
                instr = S.fnil(stmt.field)
            return T.or_(
                self.find_or_fail(p),
                T.and_(self.stop_rewind(p), self.local(pc=self.succ(), instr=instr)),
            )
        if isinstance(stmt, DataWrite):
            p = stmt.var
            return T.or_(
                self.find_or_fail(p),
                T.and_(self.stop_rewind(p), self.local(pc=self.succ(), key=self.lib.expr(stmt.expr, self.fa))),
            )
        if isinstance(stmt, DataRead):
            p = stmt.source
            return T.or_(
                self.find_or_fail(p),
                T.and_(self.stop_rewind(p), self.local(pc=self.succ(), d={stmt.var: self.g(self.fa, "key")})),
            )
        if isinstance(stmt, Free):
            p = stmt.var
            cleared = {
                q: T.or_(self.points_here(self.a, q), self.isnil(q)) for q in self.lib.prog.pointer_vars
            }
            return T.or_(
                self.find_or_fail(p),
                T.and_(self.stop_rewind(p), self.local(pc=self.succ(), active=T.FALSE, isnil=cleared)),
            )
        if isinstance(stmt, New):
            return self.new(stmt.var)
        if isinstance(stmt, PtrRead):
            return self.from_field(stmt.var, stmt.source, stmt.field)
        if isinstance(stmt, (If, While, Assign)):
            cond = stmt.expr if isinstance(stmt, Assign) else stmt.cond
            hc = lang.as_heap_condition(cond)
            if isinstance(stmt, Assign) and not lang.is_heap_assign(stmt):
                return self.local(pc=self.succ(), d={stmt.var: self.lib.expr(cond, self.fa)})
            if hc is None:
                value = self.lib.expr(cond, self.fa)
                return self.local(pc=T.ite(value, T.const(self.succ(True)), T.const(self.succ(False))))
            atom, negated = hc
            p, q = atom.lhs, atom.rhs

            def outcome(equal):
                value = T.not_(equal) if negated else equal
                if isinstance(stmt, Assign):
                    return self.local(pc=self.succ(), d={stmt.var: value})
                return self.local(pc=T.ite(value, T.const(self.succ(True)), T.const(self.succ(False))))

            return T.or_(
                T.and_(T.or_(self.isnil(p), self.isnil(q)), outcome(T.eq(self.isnil(p), self.isnil(q)))),
                self.rewind2(p, q),
                T.and_(self.stop_rewind2(p, q), outcome(self.equal_after_rewind(p, q))),
            )
        raise TypeError(stmt)

    def new(self, p):
        S, g = self.S, self.g
        lib = self.lib
        aux = list(range(lib.k + 1, lib.k + lib.m + 1))
        full = T.and_(*(g(self.fa, S.ac_name(j)) for j in aux))
        oom = T.and_(full, self.local(instr=S.oom()))
        options = []
        for j in aux:
            if self.ctx.dir != j:
                continue
            options.append(T.and_(
                T.not_(g(self.fa, S.ac_name(j))),
                *(g(self.fa, S.ac_name(i)) for i in range(lib.k + 1, j)),
                self.push(self.fa, self.fb, pc=self.succ(), instr=S.here(p), isnil={p: T.FALSE}, active=T.TRUE),
            ))
        return T.or_(oom, *options)

    def from_field(self, p, q, fname):
        S, g, lib = self.S, self.g, self.lib
        ins = g(self.fa, "instr")
        ptrs = lib.prog.pointer_vars
        not_phase2 = T.and_(*(T.not_(S.is_rwdp(r, ins)) for r in ptrs))
        j = lib.prog.field_index(fname)
        child_active = g(self.fa, S.ac_name(j)) if j <= lib.k else T.FALSE
        implicit = self.pfield_implicit(fname)

        phase2_cases = lambda r: [
            (T.eq(S.rwdp_idx(r, ins), T.const(c)), c) for c in range(2, self.a)
        ]
        if self.ctx.dir == j and j <= lib.k:
            to_child = self.push(self.fa, self.fb, pc=self.succ(), instr=S.here(p), isnil={p: T.FALSE})
        else:
            to_child = T.FALSE
        end_phase1 = [
            not_phase2, self.stop_rewind(q),
            T.implies(
                T.or_(self.pfield_nil(fname), T.and_(implicit, T.not_(child_active))),
                self.local(pc=self.succ(), isnil={p: T.TRUE}),
            ),
            T.implies(T.and_(implicit, child_active), to_child),
        ]
        for r in ptrs:
            for i in range(2, self.a + 1):
                is_ptr = self.pfield_ptr(fname, r, i)
                end_phase1.append(T.implies(T.and_(is_ptr, self.points_here(i, r)), self.set_ptr_here(p)))
                end_phase1.append(T.implies(
                    T.and_(is_ptr, T.not_(self.points_here(i, r))), self.rewind_special(r, [(T.TRUE, i)])
                ))
        return T.or_(
            T.and_(self.isnil(q), self.error()),
            T.and_(not_phase2, self.rewind(q)),
            *(T.and_(S.is_rwdp(r, ins), self.rewind_special(r, phase2_cases(r))) for r in ptrs),
            T.and_(*end_phase1),
            *(T.and_(
                S.is_rwdp(r, ins),
                T.or_(*(T.and_(c, self.points_here(i, r)) for c, i in phase2_cases(r))),
                self.set_ptr_here(p),
            ) for r in ptrs),
        )


def _int(x):
    return T.const(x) if isinstance(x, int) else x


# ---------------------------------------------------------------------------
# concrete entry points

_libraries = {}


def library(prog, k, m, n):
    key = (id(prog), k, m, n)
    lib = _libraries.get(key)
    if lib is None or lib.prog is not prog:
        lib = _libraries[key] = PredicateLibrary(prog, k, m, n)
    return lib


_cc_terms = {}


def eval_consistent_child(prog, k, m, n, tau, j, sigma):
    lib = library(prog, k, m, n)
    key = (id(lib), j)
    if key not in _cc_terms:
        _cc_terms[key] = lib.consistent_child(lib.view(lib.log_var("tau")), j, lib.view(lib.log_var("sigma")))
    return lib.evaluate(_cc_terms[key], {"tau": tau, "sigma": sigma})

"""Datatype layout of frames and logs for one (program, k, m, n) instance."""

from __future__ import annotations

import re

from .. import kt
from . import terms as T

DIR = "Dir"
INSTR = "Instr"
FRAME = "Frame"
LOG = "Log"
QHAT = "QState"


def ident(name):
    """SMT-friendly spelling of a program identifier."""
    out = name.replace("'", "_pr").replace("$", "t_")
    return re.sub(r"[^A-Za-z0-9_]", "_", out)


class Schema:
    def __init__(self, prog, k, m, n, state_sig=None):
        if n < 2:
            raise kt.ParamError("n must be at least 2")
        if m < 0 or k < 0:
            raise kt.ParamError("k and m must be non-negative")
        self.prog, self.k, self.m, self.n = prog, k, m, n
        self.width = k + m
        self.pvars = list(prog.pointer_vars)
        self.dvars = list(prog.data_vars)
        self.fields = list(prog.pointer_fields)
        self.has_states = state_sig is not None
        self.state_sig = list(state_sig or [])
        self._names = {}
        for p in self.pvars:
            self._claim(ident(p), ("p", p))
        for d, _ in self.dvars:
            self._claim(ident(d), ("d", d))
        for f in self.fields:
            self._claim("f" + ident(f), ("f", f))

        self.dir_codes = [kt.SELF, kt.UP] + list(range(1, self.width + 1))
        self.frame_fields = (
            [("avail", T.BOOL, lambda f: f.avail), ("active", T.BOOL, lambda f: f.active),
             ("key", T.INT, lambda f: f.key), ("pc", T.INT, lambda f: f.pc)]
            + [(self.d_name(d), T.BOOL if s == "bool" else T.INT, _getter("d", d)) for d, s in self.dvars]
            + [(self.upd_name(p), T.BOOL, _getter("upd", p)) for p in self.pvars]
            + [(self.isnil_name(p), T.BOOL, _getter("isnil", p)) for p in self.pvars]
            + [("instr", INSTR, lambda f: f.instr)]
            + [(self.ac_name(j), T.BOOL, _ac_getter(j)) for j in range(1, self.width + 1)]
            + [("next_dir", DIR, lambda f: f.next[0]), ("next_idx", T.INT, lambda f: f.next[1]),
               ("prev_dir", DIR, lambda f: f.prev[0]), ("prev_idx", T.INT, lambda f: f.prev[1])]
        )
        self.field_sorts = {name: sort for name, sort, _ in self.frame_fields}

    def _claim(self, name, owner):
        if name in self._names and self._names[name] != owner:
            raise ValueError(f"identifiers {self._names[name][1]!r} and {owner[1]!r} clash as {name}")
        self._names[name] = owner

    # naming ------------------------------------------------------------
    def d_name(self, d):
        return "d_" + ident(d)

    def upd_name(self, p):
        return "upd_" + ident(p)

    def isnil_name(self, p):
        return "isnil_" + ident(p)

    def ac_name(self, j):
        return f"ac_{j}"

    def frame_sel(self, i):
        return f"frame_{i}"

    def q_name(self, s):
        return "q_" + ident(s)

    def dir_ctor(self, code):
        if code == kt.SELF:
            return "dself"
        if code == kt.UP:
            return "dup"
        return f"dchild{code}"

    # term builders -------------------------------------------------------
    def dir(self, code):
        return T.ctor(self.dir_ctor(code), (), DIR)

    def frame(self, log, i):
        return T.sel(self.frame_sel(i), log, FRAME)

    def get(self, frame, name):
        return T.sel(name, frame, self.field_sorts[name])

    def nop(self):
        return T.ctor("NOP", (), INSTR)

    def err(self):
        return T.ctor("ERR", (), INSTR)

    def oom(self):
        return T.ctor("OOM", (), INSTR)

    def here(self, p):
        return T.ctor("here_" + ident(p), (), INSTR)

    def fnil(self, f):
        return T.ctor("fnil_" + ident(f), (), INSTR)

    def fassign(self, f, p):
        return T.ctor(f"fset_{ident(f)}_{ident(p)}", (), INSTR)

    def rwd(self, idx):
        return T.ctor("RWD", (_int(idx),), INSTR)

    def rwdp(self, p, idx):
        return T.ctor("RWDP_" + ident(p), (_int(idx),), INSTR)

    def is_rwd(self, instr):
        return T.tester("RWD", instr)

    def is_rwdp(self, p, instr):
        return T.tester("RWDP_" + ident(p), instr)

    def rwd_idx(self, instr):
        return T.sel("rwd_idx", instr, T.INT)

    def rwdp_idx(self, p, instr):
        return T.sel("rwdp_idx_" + ident(p), instr, T.INT)

    def instr_const(self, ins):
        """Term for a concrete kt.Instr."""
        if ins.kind == "nop":
            return self.nop()
        if ins.kind == "err":
            return self.err()
        if ins.kind == "oom":
            return self.oom()
        if ins.kind == "here":
            return self.here(ins.var)
        if ins.kind == "fnil":
            return self.fnil(ins.field)
        if ins.kind == "fassign":
            return self.fassign(ins.field, ins.var)
        if ins.kind == "rwd":
            return self.rwd(ins.idx)
        return self.rwdp(ins.var, ins.idx)

    def qnil(self):
        return T.ctor("qnil", (), QHAT)

    def qget(self, q, s):
        sort = dict(self.state_sig)[s]
        return T.sel(self.q_name(s), q, T.BOOL if sort == "bool" else T.INT)

    def is_qnil(self, q):
        return T.tester("qnil", q)

    # declarations --------------------------------------------------------
    def instr_ctors(self):
        out = [("NOP", []), ("ERR", []), ("OOM", [])]
        out += [("here_" + ident(p), []) for p in self.pvars]
        out += [("fnil_" + ident(f), []) for f in self.fields]
        out += [(f"fset_{ident(f)}_{ident(p)}", []) for f in self.fields for p in self.pvars]
        out += [("RWD", [("rwd_idx", T.INT)])]
        out += [("RWDP_" + ident(p), [("rwdp_idx_" + ident(p), T.INT)]) for p in self.pvars]
        return out

    def declarations(self):
        def ctor_text(name, fields):
            if not fields:
                return f"({name})"
            return "(" + name + " " + " ".join(f"({f} {s})" for f, s in fields) + ")"

        lines = []
        lines.append(f"(declare-datatypes (({DIR} 0)) (({' '.join(ctor_text(self.dir_ctor(c), []) for c in self.dir_codes)})))")
        lines.append(f"(declare-datatypes (({INSTR} 0)) (({' '.join(ctor_text(n, f) for n, f in self.instr_ctors())})))")
        fields = [(name, sort) for name, sort, _ in self.frame_fields]
        lines.append(f"(declare-datatypes (({FRAME} 0)) (({ctor_text('mk_frame', fields)})))")
        logf = [(self.frame_sel(i), FRAME) for i in range(1, self.n + 2)]
        lines.append(f"(declare-datatypes (({LOG} 0)) (({ctor_text('mk_log', logf)})))")
        if self.has_states:
            qf = [(self.q_name(s), "Bool" if sort == "bool" else "Int") for s, sort in self.state_sig]
            lines.append(f"(declare-datatypes (({QHAT} 0)) (((qnil) {ctor_text('qst', qf)})))")
        return lines

    # concrete interpretation ----------------------------------------------
    def model(self, env, macros=None):
        ctors = {self.dir_ctor(c): (lambda c=c: c) for c in self.dir_codes}
        ctors.update(NOP=lambda: kt.NOP, ERR=lambda: kt.ERR, OOM=lambda: kt.OOM, RWD=kt.rwd)
        selectors = {name: get for name, _, get in self.frame_fields}
        testers = {"RWD": lambda i: i.kind == "rwd"}
        selectors["rwd_idx"] = lambda i: i.idx if i.idx is not None else 0
        for p in self.pvars:
            ctors["here_" + ident(p)] = (lambda p=p: kt.here(p))
            ctors["RWDP_" + ident(p)] = (lambda i, p=p: kt.rwdp(i, p))
            testers["RWDP_" + ident(p)] = (lambda i, p=p: i.kind == "rwdp" and i.var == p)
            selectors["rwdp_idx_" + ident(p)] = lambda i: i.idx if i.idx is not None else 0
        for f in self.fields:
            ctors["fnil_" + ident(f)] = (lambda f=f: kt.fnil(f))
            for p in self.pvars:
                ctors[f"fset_{ident(f)}_{ident(p)}"] = (lambda f=f, p=p: kt.fassign(f, p))
        for i in range(1, self.n + 2):
            selectors[self.frame_sel(i)] = (lambda log, i=i: log[i - 1])
        ctors["qnil"] = lambda: None
        names = [s for s, _ in self.state_sig]
        ctors["qst"] = lambda *vals: dict(zip(names, vals))
        testers["qnil"] = lambda q: q is None
        for s in names:
            selectors[self.q_name(s)] = (lambda q, s=s: q[s] if q is not None else 0)
        return T.Model(env, ctors, selectors, testers, macros or {})


def _int(x):
    return T.const(x) if isinstance(x, int) else x


def _getter(attr, key):
    return lambda f: getattr(f, attr)[key]


def _ac_getter(j):
    return lambda f: f.active_child[j - 1]

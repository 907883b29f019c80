"""Concrete knitted-trees: construction from executions, inspection, and composition."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

from . import lang
from .interp import DataTree, Heap, default_data_env, eval_data, format_address, parse_address
from .lang import (
    Assign, DataRead, DataWrite, Exit, FieldNil, FieldWrite, Free, If, New, PtrCopy, PtrNil,
    PtrRead, Skip, While,
)

SELF = 0
UP = -1


class KTError(Exception):
    pass


class NotFound(KTError):
    pass


class InconsistentSwap(KTError):
    pass


class ParamError(KTError):
    pass


def dir_text(d):
    return {SELF: "-", UP: "^"}.get(d, str(d))


def dir_from_text(text):
    return {"-": SELF, "^": UP}.get(text) if text in ("-", "^") else int(text)


@dataclass(frozen=True)
class Instr:
    kind: str  # fassign, fnil, here, rwd, rwdp, nop, err, oom
    field: Optional[str] = None
    var: Optional[str] = None
    idx: Optional[int] = None

    def __str__(self):
        if self.kind == "fassign":
            return f"<{self.field}:={self.var}>"
        if self.kind == "fnil":
            return f"<{self.field}:=nil>"
        if self.kind == "here":
            return f"<{self.var}:=here>"
        if self.kind == "rwd":
            return f"RWD_{self.idx}"
        if self.kind == "rwdp":
            return f"RWD_{self.idx},{self.var}"
        return self.kind.upper()

    def writes_field(self, name):
        return self.kind in ("fassign", "fnil") and self.field == name


NOP = Instr("nop")
ERR = Instr("err")
OOM = Instr("oom")


def here(p):
    return Instr("here", var=p)


def rwd(i):
    return Instr("rwd", idx=i)


def rwdp(i, p):
    return Instr("rwdp", var=p, idx=i)


def fassign(f, p):
    return Instr("fassign", field=f, var=p)


def fnil(f):
    return Instr("fnil", field=f)


@dataclass
class Frame:
    avail: bool
    active: bool
    key: int
    pc: int
    d: dict
    upd: dict
    isnil: dict
    instr: Instr
    active_child: tuple
    next: tuple
    prev: tuple

    def copy(self):
        return replace(self, d=dict(self.d), upd=dict(self.upd), isnil=dict(self.isnil))

    def to_json(self):
        return {
            "avail": self.avail,
            "active": self.active,
            "key": self.key,
            "pc": self.pc,
            "d": dict(self.d),
            "upd": dict(self.upd),
            "isnil": dict(self.isnil),
            "instr": str(self.instr),
            "active_child": list(self.active_child),
            "next": [dir_text(self.next[0]), self.next[1]],
            "prev": [dir_text(self.prev[0]), self.prev[1]],
        }


def canonical_frame(prog, width):
    return Frame(
        avail=True,
        active=False,
        key=0,
        pc=0,
        d=default_data_env(prog),
        upd={p: False for p in prog.pointer_vars},
        isnil={p: False for p in prog.pointer_vars},
        instr=NOP,
        active_child=(False,) * width,
        next=(SELF, 2),
        prev=(SELF, 2),
    )


def neighbor(node, d):
    if d == SELF:
        return node
    if d == UP:
        if not node:
            raise KTError("the root has no parent")
        return node[:-1]
    return node + (d,)


def direction(src, dst):
    if src == dst:
        return SELF
    if dst == src[:-1]:
        return UP
    if dst[:-1] == src:
        return dst[-1]
    raise KTError(f"{src} and {dst} are not adjacent")


def build_backbone(tree, k, m):
    """Minimal tree containing `tree` whose internal nodes are exactly the tree's nodes, all of degree k+m."""
    inner = [a for a, _ in tree.nodes] or [()]
    nodes = set(inner)
    for a in inner:
        for j in range(1, k + m + 1):
            nodes.add(a + (j,))
    return frozenset(nodes)


def node_order(nodes):
    return sorted(nodes, key=lambda a: (len(a), a))


class Status:
    CLEAN = "C"
    ERROR = "E"
    OVERFLOW = "O"
    OOM = "M"
    NONE = "N"


@dataclass
class KnittedTree:
    program: lang.Program
    k: int
    m: int
    n: int
    backbone: frozenset
    logs: dict  # address -> list of n+1 frames (index 0 holds frame 1)
    lace: list = field(default_factory=list)

    @property
    def width(self):
        return self.k + self.m

    def frame(self, node, i):
        return self.logs[node][i - 1]

    def length(self, node):
        """Number of unavailable frames in the node's log."""
        log = self.logs[node]
        n = 0
        while n < len(log) and not log[n].avail:
            n += 1
        return n

    def last(self):
        return self.lace[-1]

    def last_frame(self):
        return self.frame(*self.last())

    def children(self, node):
        return [node + (j,) for j in range(1, self.width + 1) if node + (j,) in self.backbone]

    def copy(self):
        return KnittedTree(
            self.program, self.k, self.m, self.n, self.backbone,
            {a: [f.copy() for f in log] for a, log in self.logs.items()}, list(self.lace),
        )

    def to_json(self):
        return {
            "params": {"k": self.k, "m": self.m, "n": self.n},
            "status": exit_status(self),
            "nodes": {
                format_address(a): [f.to_json() for f in self.logs[a]] for a in node_order(self.backbone)
            },
            "lace": [[format_address(a), i] for a, i in self.lace],
        }

    def to_dot(self):
        lines = ["digraph lace {", "  rankdir=LR;"]
        for a, i in self.lace:
            f = self.frame(a, i)
            lines.append(f'  "{format_address(a) or "root"}#{i}" [label="{format_address(a) or "root"}:{i}\\npc={f.pc} {f.instr}"];')
        for (a, i), (b, j) in zip(self.lace, self.lace[1:]):
            lines.append(f'  "{format_address(a) or "root"}#{i}" -> "{format_address(b) or "root"}#{j}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Log queries shared by the encoder and the extraction functions


def points_here(log, a, p):
    """p points to this node at position a: a <p:=here> at some i<=a with no later upd_p up to a."""
    for i in range(a, 1, -1):
        f = log[i - 1]
        if f.instr.kind == "here" and f.instr.var == p:
            return True
        if f.upd[p]:
            return False
    return False


def here_position(log, a, p):
    for i in range(a, 1, -1):
        f = log[i - 1]
        if f.instr.kind == "here" and f.instr.var == p:
            return i
        if f.upd[p]:
            return None
    return None


def last_upd(log, a, p):
    for i in range(a, 1, -1):
        if log[i - 1].upd[p]:
            return i
    return 2


def cur_rewind_pos(log, a):
    f = log[a - 1]
    return f.instr.idx if f.instr.kind == "rwd" else a


def last_field_write(log, a, fname):
    """Latest (index, instr) writing fname at positions [2, a], or None."""
    for i in range(a, 1, -1):
        if log[i - 1].instr.writes_field(fname):
            return i, log[i - 1].instr
    return None


def find_ptr(kt, p, fid):
    """Frame ids visited when tracing p backwards from fid to the frame that assigned it."""
    node, i = fid
    seq = [fid]
    for _ in range(4 * (kt.n + 1) * max(1, len(kt.backbone))):
        log = kt.logs[node]
        h = here_position(log, i, p)
        if h is not None:
            if h != i:
                seq.append((node, h))
            return seq
        f = log[i - 1]
        if not f.upd[p] and i > 2:
            j = last_upd(log, i - 1, p)
            seq.append((node, j))
            i = j
            f = log[i - 1]
        d, b = f.prev
        if d == SELF:
            raise NotFound(f"no assignment to {p} before {format_address(fid[0])}:{fid[1]}")
        node = neighbor(node, d)
        i = b
        seq.append((node, i))
    raise NotFound(f"tracing {p} did not terminate")


# ---------------------------------------------------------------------------
# Construction


def first_frame(prog, tree, node, k, m):
    f = canonical_frame(prog, k + m)
    f.avail = False
    keys = tree.keys
    if node in keys:
        f.active = True
        f.key = keys[node]
        f.active_child = tuple((node + (j,)) in keys for j in range(1, k + 1)) + (False,) * m
    elif node == ():
        f.active_child = (False,) * (k + m)
    else:
        # an inactive non-root node is a leaf: it can never allocate
        f.active_child = (False,) * k + (True,) * m
    return f


def initial_kt(prog, tree, data_env, k, m, n):
    """Knitted-tree prefix holding only the input frames and the root's second frame."""
    if n < 2:
        raise ParamError("n must be at least 2")
    if tree.arity > k:
        raise ParamError(f"tree arity {tree.arity} exceeds k={k}")
    backbone = build_backbone(tree, k, m)
    logs = {}
    for node in backbone:
        log = [first_frame(prog, tree, node, k, m)]
        log += [canonical_frame(prog, k + m) for _ in range(n)]
        logs[node] = log
    kt = KnittedTree(prog, k, m, n, backbone, logs)
    root = logs[()]
    f = canonical_frame(prog, k + m)
    f.avail = False
    f.active = root[0].active
    f.key = root[0].key
    f.active_child = root[0].active_child
    f.pc = prog.entry
    f.d = default_data_env(prog)
    f.d.update(data_env or {})
    f.isnil = {p: True for p in prog.pointer_vars}
    if len(tree):
        f.instr = here(prog.root_var)
        f.isnil[prog.root_var] = False
    f.prev = (SELF, 2)
    f.next = (SELF, 3)
    root[1] = f
    kt.lace.append(((), 2))
    return kt


def _frame_status(kt, node, i):
    f = kt.frame(node, i)
    if i == kt.n + 1:
        return Status.OVERFLOW
    if isinstance(kt.program.statements.get(f.pc), Exit):
        return Status.CLEAN
    if f.instr == ERR:
        return Status.ERROR
    if f.instr == OOM:
        return Status.OOM
    return Status.NONE


def exit_status(kt):
    return _frame_status(kt, *kt.last())


class Encoder:
    """Extends a knitted-tree prefix one frame at a time, following the symbolic step rules."""

    def __init__(self, kt, log_upd=False):
        self.kt = kt
        self.prog = kt.program
        self.log_upd = log_upd
        self._lace_pos = {fid: idx for idx, fid in enumerate(kt.lace)}

    # frame pushing -----------------------------------------------------
    def push(self, node, *, pc=None, instr=NOP, isnil=None, d=None, key=None, active=None):
        kt = self.kt
        prev_node, prev_i = kt.last()
        fp = kt.frame(prev_node, prev_i)
        i = kt.length(node) + 1
        if i > kt.n + 1:
            raise KTError("log is full")
        fb = kt.frame(node, i - 1)
        back = direction(node, prev_node)
        f = canonical_frame(self.prog, kt.width)
        f.avail = False
        f.active = fb.active if active is None else active
        f.key = fb.key if key is None else key
        f.pc = fp.pc if pc is None else pc
        f.d = dict(fp.d)
        if d:
            f.d.update(d)
        f.isnil = dict(fp.isnil)
        if isnil:
            f.isnil.update(isnil)
        f.instr = instr
        ac = list(fb.active_child)
        if back not in (SELF, UP):
            ac[back - 1] = fp.active
        f.active_child = tuple(ac)
        f.prev = (back, prev_i)
        f.next = (SELF, i + 1)
        if node != prev_node and i > 2:
            if self.log_upd:
                placed = placed_since(kt.logs[prev_node], prev_i, direction(prev_node, node), i - 1)
            else:
                start = self._lace_pos[(node, i - 1)]
                between = kt.lace[start + 1:]
                placed = {p for p in self.prog.pointer_vars if any(kt.frame(*fid).instr == here(p) for fid in between)}
            for p in self.prog.pointer_vars:
                f.upd[p] = not f.isnil[p] and p in placed
        fp.next = (direction(prev_node, node), i)
        kt.logs[node][i - 1] = f
        self._lace_pos[(node, i)] = len(kt.lace)
        kt.lace.append((node, i))
        return f

    def advance(self, pc, branch=None):
        return lang.successor(self.prog, pc, branch)

    # single lace step ----------------------------------------------------
    def step(self):
        """Push the next frame of the lace. Returns the new status."""
        kt = self.kt
        node, a = kt.last()
        log = kt.logs[node]
        f = log[a - 1]
        s = self.prog.statements[f.pc]
        pc = f.pc

        def local(**kw):
            self.push(node, **kw)

        def hop(pos, vars_, special=None):
            target_pos = max(last_upd(log, pos, v) for v in vars_)
            d, b = log[target_pos - 1].prev
            if d == SELF:
                raise NotFound(f"rewinding for {vars_} reached the start of the lace")
            tgt = neighbor(node, d)
            self.push(tgt, instr=rwd(b) if special is None else rwdp(b, special))

        def find_or_fail(p):
            """Return True when p points here (ready for the final frame); otherwise push a frame."""
            if f.isnil[p]:
                local(instr=ERR)
                return False
            pos = cur_rewind_pos(log, a)
            if points_here(log, pos, p):
                return True
            hop(pos, [p])
            return False

        if isinstance(s, Exit):
            raise KTError("cannot step past exit")
        if isinstance(s, Skip):
            local(pc=self.advance(pc))
        elif isinstance(s, Assign) and not lang.is_heap_assign(s):
            local(pc=self.advance(pc), d={s.var: eval_data(s.expr, f.d)})
        elif isinstance(s, PtrNil):
            local(pc=self.advance(pc), isnil={s.var: True})
        elif isinstance(s, PtrCopy):
            q = s.source
            if f.isnil[q]:
                local(pc=self.advance(pc), isnil={s.var: True})
            else:
                pos = cur_rewind_pos(log, a)
                if points_here(log, pos, q):
                    local(pc=self.advance(pc), instr=here(s.var), isnil={s.var: False})
                else:
                    hop(pos, [q])
        elif isinstance(s, PtrRead):
            self._step_from_field(s, node, a, log, f, local, hop)
        elif isinstance(s, (FieldNil, FieldWrite)):
            if find_or_fail(s.var):
                if isinstance(s, FieldWrite) and not f.isnil[s.source]:
                    instr = fassign(s.field, s.source)
                else:
                    instr = fnil(s.field)
                local(pc=self.advance(pc), instr=instr)
        elif isinstance(s, DataWrite):
            if find_or_fail(s.var):
                local(pc=self.advance(pc), key=eval_data(s.expr, f.d))
        elif isinstance(s, DataRead):
            if find_or_fail(s.source):
                local(pc=self.advance(pc), d={s.var: f.key})
        elif isinstance(s, Free):
            if find_or_fail(s.var):
                cleared = {q: True for q in self.prog.pointer_vars if points_here(log, a, q)}
                local(pc=self.advance(pc), active=False, isnil=cleared)
        elif isinstance(s, New):
            free_slots = [j for j in range(kt.k + 1, kt.width + 1) if not f.active_child[j - 1]]
            if not free_slots:
                local(instr=OOM)
            else:
                self.push(node + (free_slots[0],), pc=self.advance(pc), instr=here(s.var),
                          isnil={s.var: False}, active=True)
        elif isinstance(s, (If, While)) or lang.is_heap_assign(s):
            cond = s.cond if isinstance(s, (If, While)) else s.expr
            hc = lang.as_heap_condition(cond)
            if hc is None:
                value = bool(eval_data(cond, f.d))
                local(pc=self.advance(pc, value))
            else:
                atom, negated = hc
                p, q = atom.lhs, atom.rhs
                if atom.field is not None or q is None:
                    raise KTError("program must be normalized before encoding")
                result = None
                if f.isnil[p] or f.isnil[q]:
                    result = f.isnil[p] == f.isnil[q]
                else:
                    pos = cur_rewind_pos(log, a)
                    hp, hq = points_here(log, pos, p), points_here(log, pos, q)
                    if hp or hq:
                        result = hp and hq
                    else:
                        hop(pos, [p, q])
                if result is not None:
                    value = result != negated
                    if isinstance(s, Assign):
                        local(pc=self.advance(pc), d={s.var: value})
                    else:
                        local(pc=self.advance(pc, value))
        else:  # pragma: no cover
            raise TypeError(s)
        return exit_status(kt)

    def _step_from_field(self, s, node, a, log, f, local, hop):
        kt = self.kt
        pc = f.pc
        p, q, fname = s.var, s.source, s.field
        if f.isnil[q]:
            local(instr=ERR)
            return
        if f.instr.kind == "rwdp":
            r, i = f.instr.var, f.instr.idx
            if points_here(log, i, r):
                local(pc=self.advance(pc), instr=here(p), isnil={p: False})
            else:
                hop(i, [r], special=r)
            return
        pos = cur_rewind_pos(log, a)
        if not points_here(log, pos, q):
            hop(pos, [q])
            return
        write = last_field_write(log, a, fname)
        if write is None:
            j = self.prog.field_index(fname)
            if j <= kt.k and f.active_child[j - 1]:
                self.push(node + (j,), pc=self.advance(pc), instr=here(p), isnil={p: False})
            else:
                local(pc=self.advance(pc), isnil={p: True})
            return
        i, instr = write
        if instr.kind == "fnil":
            local(pc=self.advance(pc), isnil={p: True})
        elif points_here(log, i, instr.var):
            local(pc=self.advance(pc), instr=here(p), isnil={p: False})
        else:
            hop(i, [instr.var], special=instr.var)

    def statement(self):
        """Run one program statement to completion (pc advances or the lace stops)."""
        kt = self.kt
        start_pc = kt.last_frame().pc
        guard = 0
        while True:
            status = self.step()
            if status != Status.NONE:
                return status
            top = kt.last_frame()
            if top.instr.kind not in ("rwd", "rwdp"):
                return status
            guard += 1
            if guard > 10 * (kt.n + 1) * len(kt.backbone):
                raise KTError(f"rewinding at pc {start_pc} does not terminate")


def encode_run(prog, tree, data_env, m, n, k=None, max_statements=None):
    """Encode the execution of prog on (tree, data_env) until it stops or max_statements are done."""
    k = len(prog.pointer_fields) if k is None else k
    if not lang.is_normalized(prog):
        raise KTError("program must be normalized before encoding")
    kt = initial_kt(prog, tree, data_env, k, m, n)
    enc = Encoder(kt)
    done = 0
    status = exit_status(kt)
    while status == Status.NONE and (max_statements is None or done < max_statements):
        status = enc.statement()
        done += 1
    return kt


def encode_execution(prog, ex, m, n, k=None):
    """Encode an interpreter execution of prog as one member of its (m, n)-knitted-trees."""
    transitions = len(ex.steps) - 1
    if ex.outcome == "error":
        transitions += 1  # the failing statement pushes the ERR frame
    return encode_run(prog, ex.tree, ex.initial_data, m, n, k=k, max_statements=transitions)


# ---------------------------------------------------------------------------
# Extraction


def extract_input(kt):
    root = kt.frame((), 1)
    if not root.active:
        return DataTree.make(kt.k, {})
    nodes = {a: kt.frame(a, 1).key for a in kt.backbone if kt.frame(a, 1).active}
    return DataTree.make(kt.k, nodes)


def _top(kt, node):
    return kt.frame(node, kt.length(node))


def _resolve(kt, p, fid):
    seq = find_ptr(kt, p, fid)
    return seq[-1][0]


def extract_pv(kt):
    last = kt.last()
    f = kt.frame(*last)
    return {p: (None if f.isnil[p] else _resolve(kt, p, last)) for p in kt.program.pointer_vars}


def extract_heap(kt):
    """Heap encoded by the lace so far; node ids are backbone addresses."""
    prog = kt.program
    heap = Heap(set(), {}, {fname: {} for fname in prog.pointer_fields})
    active = {a for a in kt.backbone if _top(kt, a).active}
    for a in active:
        heap.nodes.add(a)
        heap.data[a] = _top(kt, a).key
    for a in active:
        length = kt.length(a)
        log = kt.logs[a]
        for j, fname in enumerate(prog.pointer_fields, start=1):
            write = last_field_write(log, length, fname)
            if write is None:
                child = a + (j,)
                target = child if j <= kt.k and child in active else None
            elif write[1].kind == "fnil":
                target = None
            else:
                target = _resolve(kt, write[1].var, (a, write[0]))
            heap.fields[fname][a] = target if target in active else None
    return heap


def kt_configuration_view(kt):
    """(heap, ptr_env, data_env, pc) as recorded at the end of the lace."""
    f = kt.last_frame()
    return extract_heap(kt), extract_pv(kt), dict(f.d), f.pc


# ---------------------------------------------------------------------------
# Consistency checks and composition


def lace_well_formed(kt):
    problems = []
    if not kt.lace or kt.lace[0] != ((), 2) or kt.frame((), 2).prev != (SELF, 2):
        problems.append("lace does not start at the root's second frame")
    for node in kt.backbone:
        log = kt.logs[node]
        L = kt.length(node)
        if any(not f.avail for f in log[L:]):
            problems.append(f"log of {format_address(node)} has a gap")
    on_lace = set(kt.lace)
    for node in kt.backbone:
        for i in range(2, kt.length(node) + 1):
            if (node, i) not in on_lace:
                problems.append(f"frame {format_address(node)}:{i} is not on the lace")
    for (a, i), (b, j) in zip(kt.lace, kt.lace[1:]):
        if kt.frame(a, i).next != (direction(a, b), j):
            problems.append(f"next of {format_address(a)}:{i} is wrong")
        if kt.frame(b, j).prev != (direction(b, a), i):
            problems.append(f"prev of {format_address(b)}:{j} is wrong")
    return problems


def log_of(kt, node):
    return kt.logs[node]


def placed_since(log, a, d, b):
    """Pointers given a <p:=here> on the lace since it left the neighbour d at frame b, read off log[..a].

    The lace entered this node at the frame whose prev is (d, b); from there to a it either
    assigned here or came back with upd set.
    """
    entry = next((c for c in range(a, 1, -1) if log[c - 1].prev == (d, b)), None)
    if entry is None:
        raise NotFound("the lace never came from that neighbour")
    out = set()
    for c in range(entry, a + 1):
        f = log[c - 1]
        if f.instr.kind == "here":
            out.add(f.instr.var)
        if c > entry:
            out |= {p for p, v in f.upd.items() if v}
    return out


def _continues(prog, f):
    return not f.avail and not isinstance(prog.statements.get(f.pc), Exit) and f.instr not in (ERR, OOM)


def replay_step(prog, k, m, n, src, a, dst, d, j=None):
    """The frame the encoder pushes after frame a of log src, if it lands on the neighbour d at index b.

    dst is the neighbour's log; only its frames below the landing index are read. For d = UP,
    src is the j-th child. Returns (direction, index, frame), or None when the step leaves for
    another node or cannot be taken.
    """
    width = k + m
    if d == SELF:
        here_addr, there = (), ()
    elif d == UP:
        here_addr, there = (j,), ()
    else:
        here_addr, there = (), (d,)
    logs = {here_addr: [f.copy() for f in src[:a]] + [canonical_frame(prog, width) for _ in range(n + 1 - a)]}
    if d != SELF:
        L = next((i for i, f in enumerate(dst) if f.avail), len(dst))
        logs[there] = [f.copy() for f in dst[:L]] + [canonical_frame(prog, width) for _ in range(n + 1 - L)]
    mini = KnittedTree(prog, k, m, n, frozenset(logs), logs, [(here_addr, a)])
    enc = Encoder(mini, log_upd=True)
    try:
        enc.step()
    except (KTError, KeyError, IndexError):
        return None
    node, b = mini.last()
    if node != there:
        return None
    return d, b, mini.frame(node, b)


def _same_but_next(f, g):
    return replace(f, next=None) == replace(g, next=None)


def _linked_step_ok(prog, k, m, n, src, a, dst, b, d, back):
    f = src[a - 1]
    if f.avail or dst[b - 1].avail or (b > 2 and dst[b - 2].avail):
        return False
    if not _continues(prog, f) or f.next != (d, b) or dst[b - 1].prev != (back, a):
        return False
    shown = [g.copy() for g in dst[: b - 1]] + [canonical_frame(prog, k + m) for _ in range(n + 2 - b)]
    r = replay_step(prog, k, m, n, src, a, shown, d, back)
    return r is not None and r[1] == b and _same_but_next(r[2], dst[b - 1])


def internal_step_ok(prog, k, m, n, log, a):
    """Frame a+1 of log is what the encoder pushes in place after frame a."""
    f = log[a - 1]
    if a + 1 > n + 1 or log[a].avail or not _continues(prog, f):
        return False
    if f.next != (SELF, a + 1) or log[a].prev != (SELF, a):
        return False
    r = replay_step(prog, k, m, n, log, a, None, SELF)
    return r is not None and r[1] == a + 1 and _same_but_next(r[2], log[a])


def check_consistent_child(tau, j, sigma, prog, k, m, n):
    """Can tau be the log of the j-th child of a node labelled sigma?

    First frames agree, and every lace link between the two logs is a step the encoder takes.
    """
    s1, t1 = sigma[0], tau[0]
    if not (sigma[1].prev == (SELF, 2) and not sigma[1].avail) and not s1.active:
        return False
    if t1.active and not s1.active:
        return False
    if j > k and t1.active:
        return False
    if s1.active_child[j - 1] != t1.active:
        return False
    for a in range(2, n + 1):
        for b in range(2, n + 2):
            linked = (not sigma[a - 1].avail and sigma[a - 1].next == (j, b) and not tau[b - 1].avail) or (
                not tau[b - 1].avail and tau[b - 1].prev == (UP, a))
            if linked and not _linked_step_ok(prog, k, m, n, sigma, a, tau, b, j, UP):
                return False
            linked = (not tau[a - 1].avail and tau[a - 1].next == (UP, b) and not sigma[b - 1].avail) or (
                not sigma[b - 1].avail and sigma[b - 1].prev == (j, a))
            if linked and not _linked_step_ok(prog, k, m, n, tau, a, sigma, b, UP, j):
                return False
    return True


def subtree_nodes(kt, top):
    return [a for a in kt.backbone if a[: len(top)] == top]


def subtree_swap(k1, t1, k2, t2, j):
    """Replace the subtree under k1's node t1.j by the subtree of k2 rooted at t2."""
    if (k1.k, k1.m, k1.n) != (k2.k, k2.m, k2.n):
        raise InconsistentSwap("knitted-trees use different parameters")
    if not t2:
        # a root log opens the lace itself, so it cannot hang below another node
        raise InconsistentSwap("the root log cannot become a child")
    if not check_consistent_child(k2.logs[t2], j, k1.logs[t1], k1.program, k1.k, k1.m, k1.n):
        raise InconsistentSwap("child log is not consistent with the parent log")
    child = t1 + (j,)
    out = k1.copy()
    for a in subtree_nodes(k1, child):
        del out.logs[a]
    nodes = set(out.logs)
    for a in subtree_nodes(k2, t2):
        new_addr = child + a[len(t2):]
        out.logs[new_addr] = [f.copy() for f in k2.logs[a]]
        nodes.add(new_addr)
    out.backbone = frozenset(nodes)
    out.lace = rebuild_lace(out)
    return out


def rebuild_lace(kt):
    """Follow next pointers from the root's second frame."""
    lace = [((), 2)]
    seen = {((), 2)}
    while True:
        node, i = lace[-1]
        f = kt.frame(node, i)
        d, j = f.next
        try:
            nxt = (neighbor(node, d), j)
        except KTError:
            break
        if nxt[0] not in kt.logs or j > kt.n + 1 or kt.frame(*nxt).avail or nxt in seen:
            break
        if kt.frame(*nxt).prev != (direction(nxt[0], node), i):
            break
        lace.append(nxt)
        seen.add(nxt)
    return lace


def dump_json(kt):
    return json.dumps(kt.to_json(), indent=2, sort_keys=False)


def instr_from_text(text):
    if text in ("NOP", "ERR", "OOM"):
        return Instr(text.lower())
    if text.startswith("RWD_"):
        idx, _, var = text[4:].partition(",")
        return rwdp(int(idx), var) if var else rwd(int(idx))
    if text.startswith("<") and text.endswith(">") and ":=" in text:
        lhs, rhs = text[1:-1].split(":=")
        if rhs == "here":
            return here(lhs)
        return fnil(lhs) if rhs == "nil" else fassign(lhs, rhs)
    raise ValueError(f"bad instruction {text!r}")


def frame_from_json(doc):
    return Frame(
        doc["avail"], doc["active"], doc["key"], doc["pc"], dict(doc["d"]), dict(doc["upd"]), dict(doc["isnil"]),
        instr_from_text(doc["instr"]), tuple(doc["active_child"]),
        (dir_from_text(doc["next"][0]), doc["next"][1]), (dir_from_text(doc["prev"][0]), doc["prev"][1]),
    )


def load_json(doc, prog):
    """Rebuild a knitted-tree from its JSON dump; the program is not part of the dump."""
    p = doc["params"]
    logs = {parse_address(a): [frame_from_json(f) for f in log] for a, log in doc["nodes"].items()}
    lace = [(parse_address(a), i) for a, i in doc["lace"]]
    return KnittedTree(prog, p["k"], p["m"], p["n"], frozenset(logs), logs, lace)

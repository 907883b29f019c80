"""Concrete interpreter for the heap language; the ground truth for encodings."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

from . import lang
from .lang import (
    Assign, DataRead, DataWrite, Exit, FieldNil, FieldWrite, Free, HeapAtom, If, Lit, Name, New,
    Op, PtrCopy, PtrNil, PtrRead, Skip, While,
)


class ArityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Data trees


def format_address(addr):
    if all(d < 10 for d in addr):
        return "".join(str(d) for d in addr)
    return ".".join(str(d) for d in addr)


def parse_address(text):
    if not text:
        return ()
    if "." in text:
        return tuple(int(x) for x in text.split("."))
    return tuple(int(c) for c in text)


@dataclass(frozen=True)
class DataTree:
    """A finite k-ary tree with an integer key per node, addressed by 1-based child paths."""

    arity: int
    nodes: tuple  # sorted ((address, key), ...)

    @staticmethod
    def make(arity, nodes):
        nodes = {tuple(a): int(k) for a, k in dict(nodes).items()}
        for addr in nodes:
            if addr and addr[:-1] not in nodes:
                raise ValueError(f"address {format_address(addr)} has no parent")
            if any(not 1 <= d <= arity for d in addr):
                raise ValueError(f"address {format_address(addr)} exceeds arity {arity}")
        return DataTree(arity, tuple(sorted(nodes.items(), key=lambda kv: (len(kv[0]), kv[0]))))

    @property
    def keys(self):
        return dict(self.nodes)

    def __contains__(self, addr):
        return tuple(addr) in self.keys

    def __len__(self):
        return len(self.nodes)

    def to_json(self):
        return {"arity": self.arity, "nodes": {format_address(a): k for a, k in self.nodes}}

    @staticmethod
    def from_json(doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        return DataTree.make(doc["arity"], {parse_address(a): k for a, k in doc["nodes"].items()})


def list_tree(keys):
    """A singly linked list as a unary tree."""
    return DataTree.make(1, {(1,) * i: k for i, k in enumerate(keys)})


def tree_shapes(arity, max_nodes):
    """All prefix-closed address sets with at most max_nodes nodes (including the empty tree)."""
    seen = {frozenset()}
    frontier = [frozenset([()])] if max_nodes > 0 else []
    seen.update(frontier)
    while frontier:
        nxt = []
        for shape in frontier:
            if len(shape) >= max_nodes:
                continue
            for addr in shape:
                for j in range(1, arity + 1):
                    child = addr + (j,)
                    if child not in shape:
                        grown = shape | {child}
                        if grown not in seen:
                            seen.add(grown)
                            nxt.append(grown)
        frontier = nxt
    return sorted(seen, key=lambda s: (len(s), sorted(s)))


def all_trees(arity, max_nodes, key_values):
    for shape in tree_shapes(arity, max_nodes):
        addrs = sorted(shape, key=lambda a: (len(a), a))
        for keys in itertools.product(key_values, repeat=len(addrs)):
            yield DataTree.make(arity, dict(zip(addrs, keys)))


# ---------------------------------------------------------------------------
# Heaps and configurations


@dataclass
class Heap:
    nodes: set = field(default_factory=set)
    data: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)  # field -> {node: node or None}

    def copy(self):
        return Heap(set(self.nodes), dict(self.data), {f: dict(m) for f, m in self.fields.items()})

    def get(self, node, fname):
        return self.fields[fname].get(node)


@dataclass
class Configuration:
    heap: Heap
    ptr_env: dict
    data_env: dict
    pc: Optional[int]
    next_id: int = 0

    def copy(self):
        return Configuration(self.heap.copy(), dict(self.ptr_env), dict(self.data_env), self.pc, self.next_id)


@dataclass
class StepResult:
    kind: str  # 'next', 'final', 'error'
    config: Optional[Configuration] = None
    reason: str = ""


@dataclass
class Execution:
    steps: list
    outcome: str  # 'running', 'final', 'error', 'fuel'
    reason: str = ""
    tree: Optional[DataTree] = None
    initial_data: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.steps[-1]


def default_data_env(prog):
    return {n: (False if s == "bool" else 0) for n, s in prog.data_vars}


def initial_configuration(prog, tree, data_env=None):
    """Tree-isomorphic heap with the root pointer on the tree root; node ids follow address order."""
    if tree.arity > len(prog.pointer_fields):
        raise ArityError(f"tree arity {tree.arity} exceeds the {len(prog.pointer_fields)} pointer fields")
    ids = {addr: i for i, (addr, _) in enumerate(tree.nodes)}
    heap = Heap(set(ids.values()), {ids[a]: k for a, k in tree.nodes}, {f: {} for f in prog.pointer_fields})
    for addr, node in ids.items():
        for j, fname in enumerate(prog.pointer_fields, start=1):
            heap.fields[fname][node] = ids.get(addr + (j,))
    env = {p: None for p in prog.pointer_vars}
    env[prog.root_var] = ids.get(())
    data = default_data_env(prog)
    data.update(data_env or {})
    return Configuration(heap, env, data, prog.entry, len(ids))


def eval_data(expr, env):
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Name):
        return env[expr.ident]
    args = [eval_data(a, env) for a in expr.args]
    op = expr.op
    if op == "+":
        return args[0] + args[1]
    if op == "-":
        return args[0] - args[1]
    if op == "*":
        return args[0] * args[1]
    if op == "neg":
        return -args[0]
    if op == "<":
        return args[0] < args[1]
    if op == "<=":
        return args[0] <= args[1]
    if op == ">":
        return args[0] > args[1]
    if op == ">=":
        return args[0] >= args[1]
    if op == "=":
        return args[0] == args[1]
    if op == "!=":
        return args[0] != args[1]
    if op == "and":
        return args[0] and args[1]
    if op == "or":
        return args[0] or args[1]
    if op == "not":
        return not args[0]
    if op == "=>":
        return (not args[0]) or args[1]
    raise ValueError(f"unknown operator {op}")


class _NilDeref(Exception):
    pass


def _eval_cond(expr, c):
    if isinstance(expr, HeapAtom):
        lhs = c.ptr_env[expr.lhs]
        if expr.field is not None:
            if lhs is None:
                raise _NilDeref(f"{expr.lhs} is nil")
            lhs = c.heap.get(lhs, expr.field)
        rhs = c.ptr_env[expr.rhs] if expr.rhs is not None else None
        return lhs == rhs
    if isinstance(expr, Op) and any(True for _ in lang.heap_atoms(expr)):
        args = [_eval_cond(a, c) for a in expr.args]
        return eval_data(Op(expr.op, tuple(Lit(a) for a in args)), {})
    return eval_data(expr, c.data_env)


def step(prog, c):
    s = prog.statements[c.pc]
    if isinstance(s, Exit):
        return StepResult("final", c)
    n = c.copy()
    env, heap = n.ptr_env, n.heap
    try:
        if isinstance(s, (If, While)):
            n.pc = lang.successor(prog, s.label, bool(_eval_cond(s.cond, c)))
            return StepResult("next", n)
        if isinstance(s, Skip):
            pass
        elif isinstance(s, Assign):
            n.data_env[s.var] = _eval_cond(s.expr, c)
        elif isinstance(s, PtrNil):
            env[s.var] = None
        elif isinstance(s, PtrCopy):
            env[s.var] = c.ptr_env[s.source]
        elif isinstance(s, PtrRead):
            src = c.ptr_env[s.source]
            if src is None:
                raise _NilDeref(f"{s.source} is nil")
            env[s.var] = heap.get(src, s.field)
        elif isinstance(s, (FieldNil, FieldWrite)):
            tgt = c.ptr_env[s.var]
            if tgt is None:
                raise _NilDeref(f"{s.var} is nil")
            heap.fields[s.field][tgt] = c.ptr_env[s.source] if isinstance(s, FieldWrite) else None
        elif isinstance(s, DataWrite):
            tgt = c.ptr_env[s.var]
            if tgt is None:
                raise _NilDeref(f"{s.var} is nil")
            heap.data[tgt] = eval_data(s.expr, c.data_env)
        elif isinstance(s, DataRead):
            src = c.ptr_env[s.source]
            if src is None:
                raise _NilDeref(f"{s.source} is nil")
            n.data_env[s.var] = heap.data[src]
        elif isinstance(s, New):
            node = n.next_id
            n.next_id += 1
            heap.nodes.add(node)
            heap.data[node] = 0
            for m in heap.fields.values():
                m[node] = None
            env[s.var] = node
        elif isinstance(s, Free):
            node = c.ptr_env[s.var]
            if node is None:
                raise _NilDeref(f"free of nil pointer {s.var}")
            heap.nodes.discard(node)
            heap.data.pop(node, None)
            for m in heap.fields.values():
                m.pop(node, None)
                for src, dst in m.items():
                    if dst == node:
                        m[src] = None
            for p, v in env.items():
                if v == node:
                    env[p] = None
        else:  # pragma: no cover
            raise TypeError(s)
    except _NilDeref as exc:
        return StepResult("error", c, f"label {s.label}: {exc}")
    n.pc = lang.successor(prog, s.label)
    return StepResult("next", n)


def run(prog, tree, data_env=None, fuel=10_000):
    """Execute until exit, an error, or `fuel` transitions have been taken."""
    c = initial_configuration(prog, tree, data_env)
    steps = [c]
    done = lambda outcome, reason="": Execution(steps, outcome, reason, tree, dict(c0.data_env))
    c0 = c
    for _ in range(fuel + 1):
        r = step(prog, c)
        if r.kind == "final":
            return done("final")
        if r.kind == "error":
            return done("error", r.reason)
        if len(steps) > fuel:
            break
        c = r.config
        steps.append(c)
    return done("fuel")


def heap_as_tree(c, prog):
    """Read back the heap reachable from the root pointer through the tree fields, if it is a tree."""
    root = c.ptr_env[prog.root_var]
    nodes = {}
    if root is None:
        return DataTree.make(len(prog.pointer_fields), {})
    todo = [((), root)]
    seen = set()
    while todo:
        addr, node = todo.pop()
        if node in seen:
            return None
        seen.add(node)
        nodes[addr] = c.heap.data[node]
        for j, f in enumerate(prog.pointer_fields, start=1):
            child = c.heap.get(node, f)
            if child is not None:
                todo.append((addr + (j,), child))
    return DataTree.make(len(prog.pointer_fields), nodes)


def canonical_heap(c):
    """Heap plus pointer environment up to renaming of node ids, as a hashable value."""
    order = {}

    def visit(node):
        if node is None or node in order:
            return
        order[node] = len(order)
        for f in sorted(c.heap.fields):
            visit(c.heap.get(node, f))

    for p in sorted(c.ptr_env):
        visit(c.ptr_env[p])
    for node in sorted(c.heap.nodes):
        visit(node)
    rename = lambda n: None if n is None else order[n]
    return (
        tuple(sorted((rename(n), c.heap.data[n]) for n in c.heap.nodes)),
        tuple(sorted((f, rename(s), rename(d)) for f, m in c.heap.fields.items() for s, d in m.items() if s in c.heap.nodes)),
        tuple(sorted((p, rename(v)) for p, v in c.ptr_env.items())),
    )

"""SMT-LIB (HORN) emission and a subprocess driver for an external Horn solver."""

from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass

from .chc import terms as T

SAT = "sat"
UNSAT = "unsat"
UNKNOWN = "unknown"
TIMEOUT = "timeout"
SOLVER_ERROR = "error"

SOLVER_ENV = "KNITCHECK_SOLVER"
SOLVER_FLAGS_ENV = "KNITCHECK_SOLVER_FLAGS"


class SolverUnavailable(RuntimeError):
    pass


@dataclass
class SolveResult:
    status: str
    elapsed: float = 0.0
    message: str = ""

    @property
    def decided(self):
        return self.status in (SAT, UNSAT)

    def __str__(self):
        return self.status if not self.message else f"{self.status} ({self.message})"


# ---------------------------------------------------------------------------
# emission


def _sort_text(sort):
    return sort


def _atom_text(atom):
    if not atom.args:
        return T.smt_symbol(atom.name)
    return "(" + T.smt_symbol(atom.name) + " " + " ".join(T.to_smt(a) for a in atom.args) + ")"


def clause_text(c):
    body = [_atom_text(a) for a in c.body_atoms]
    if not T.is_true(c.body_constraint):
        body.append(T.to_smt(c.body_constraint))
    head = "false" if c.head is None else _atom_text(c.head)
    if not body:
        inner = head
    elif len(body) == 1:
        inner = f"(=> {body[0]} {head})"
    else:
        inner = f"(=> (and {' '.join(body)}) {head})"
    vs = c.variables()
    if not vs:
        return f"(assert {inner})"
    binders = " ".join(f"({T.smt_symbol(v.name)} {_sort_text(v.sort)})" for v in vs)
    return f"(assert (forall ({binders}) {inner}))"


def emit_smtlib(system):
    """Deterministic SMT-LIB text for a CHC system."""
    p = system.params
    lines = ["(set-logic HORN)"]
    info = " ".join(f"{k}={p[k]}" for k in sorted(p))
    lines.append(f"(set-info :source |{info}|)")
    lines += system.schema.declarations()
    for name in sorted(system.relations):
        sorts = " ".join(system.relations[name])
        lines.append(f"(declare-fun {T.smt_symbol(name)} ({sorts}) Bool)")
    for name in system.used_macros():
        params, body = system.lib.macros[name]
        binders = " ".join(f"({x} Log)" for x in params)
        lines.append(f"(define-fun {name} ({binders}) Bool {T.to_smt(body)})")
    for c in system.clauses:
        lines.append(clause_text(c))
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def write_smtlib(system, path):
    text = emit_smtlib(system)
    with open(path, "w") as fh:
        fh.write(text)
    return len(text.encode())


# ---------------------------------------------------------------------------
# solving


def solver_command(solver=None):
    path = solver or os.environ.get(SOLVER_ENV) or shutil.which("z3")
    if not path:
        raise SolverUnavailable("no Horn solver found; set KNITCHECK_SOLVER or pass --solver")
    if not os.path.exists(path) and not shutil.which(path):
        raise SolverUnavailable(f"solver {path!r} not found")
    flags = shlex.split(os.environ.get(SOLVER_FLAGS_ENV, ""))
    return [path] + flags


def solve(text, timeout=60.0, solver=None):
    """Run the solver on SMT-LIB text and classify its first answer line."""
    cmd = solver_command(solver)
    if os.path.basename(cmd[0]).startswith("z3"):
        # wall-clock backstop in case this process dies before it can kill the solver
        cmd.append(f"-T:{int(timeout) + 5}")
    with tempfile.NamedTemporaryFile("w", suffix=".smt2", delete=False) as fh:
        fh.write(text)
        path = fh.name
    start = time.monotonic()
    try:
        proc = subprocess.Popen(cmd + [path], stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        try:
            out, err = proc.communicate(timeout=timeout)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.communicate()
            return SolveResult(TIMEOUT, time.monotonic() - start)
    except OSError as exc:
        return SolveResult(SOLVER_ERROR, time.monotonic() - start, str(exc))
    finally:
        os.unlink(path)
    elapsed = time.monotonic() - start
    for line in out.splitlines():
        word = line.strip()
        if word in (SAT, UNSAT, UNKNOWN):
            return SolveResult(word, elapsed)
        if word.startswith("(error"):
            return SolveResult(SOLVER_ERROR, elapsed, word)
        if word:
            break
    message = (out.strip() or err.strip() or f"exit code {proc.returncode}").splitlines()[0]
    if "timeout" in message or "canceled" in message:
        return SolveResult(TIMEOUT, elapsed, message)
    return SolveResult(SOLVER_ERROR, elapsed, message)


def solve_system(system, timeout=60.0, solver=None):
    return solve(emit_smtlib(system), timeout, solver)


# ---------------------------------------------------------------------------
# reading back


def parse_sexprs(text):
    """Parse SMT-LIB text into nested lists of atoms (strings)."""
    out, stack = [], [[]]
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == "(":
            stack.append([])
            i += 1
        elif c == ")":
            if len(stack) == 1:
                raise SyntaxError("unbalanced parenthesis")
            done = stack.pop()
            stack[-1].append(done)
            i += 1
        elif c.isspace():
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            stack[-1].append(text[i:j + 1])
            i = j + 1
        elif c == '"':
            j = text.index('"', i + 1)
            stack[-1].append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()|;":
                j += 1
            stack[-1].append(text[i:j])
            i = j
    if len(stack) != 1:
        raise SyntaxError("unbalanced parenthesis")
    out = stack[0]
    return out


def read_clauses(text):
    """Summaries of the asserted clauses: (head relation or 'false', sorted body relation names)."""
    relations = set()
    macros = {}
    clauses = []
    for cmd in parse_sexprs(text):
        if not isinstance(cmd, list) or not cmd:
            continue
        if cmd[0] == "declare-fun":
            relations.add(cmd[1])
        elif cmd[0] == "define-fun":
            macros[cmd[1]] = cmd[4]
        elif cmd[0] == "assert":
            body = cmd[1]
            if isinstance(body, list) and body[0] == "forall":
                body = body[2]
            if isinstance(body, list) and body[0] == "=>":
                premise, head = body[1], body[2]
            else:
                premise, head = [], body
            atoms = premise[1:] if isinstance(premise, list) and premise and premise[0] == "and" else [premise]
            rels = sorted(
                a[0] if isinstance(a, list) else a
                for a in atoms
                if (a[0] if isinstance(a, list) and a else a) in relations
            )
            hname = head if isinstance(head, str) else head[0]
            clauses.append((hname, tuple(rels)))
    return relations, macros, clauses

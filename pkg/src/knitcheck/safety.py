"""Exit-status queries and the iterative memory-safety loop."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import lang, smt
from .chc import build_cex, build_cpre

POSITIVE = "positive"
NEGATIVE = "negative"
UNKNOWN = "unknown"

BUDGET_EXHAUSTED = "budget-exhausted"
SOLVER_UNKNOWN = "solver-unknown"
SOLVER_TIMEOUT = "solver-timeout"


@dataclass
class Query:
    answer: str  # POSITIVE | NEGATIVE | UNKNOWN
    result: smt.SolveResult


def check_exit_status(prog, k, m, n, ex_set, precond=None, timeout=60.0, solver=None):
    """Is some exit status in ex_set reachable within the (m, n) encoding?"""
    if precond is None:
        system = build_cex(prog, k, m, n, ex_set)
    else:
        system = build_cpre(prog, k, m, n, ex_set, precond)
    r = smt.solve_system(system, timeout, solver)
    if r.status == smt.SOLVER_ERROR:
        raise smt.SolverUnavailable(r.message or "solver failed")
    answer = {smt.UNSAT: POSITIVE, smt.SAT: NEGATIVE}.get(r.status, UNKNOWN)
    return Query(answer, r)


@dataclass
class Stage:
    m: int
    n: int
    answers: dict = field(default_factory=dict)  # status -> Query

    def to_json(self):
        return {
            "m": self.m, "n": self.n,
            "queries": {s: {"answer": q.answer, "solver": q.result.status, "seconds": round(q.result.elapsed, 3)}
                        for s, q in self.answers.items()},
        }


@dataclass
class Verdict:
    kind: str  # "safe" | "unsafe" | "inconclusive"
    stage: tuple  # (m, n) of the deciding stage
    status: str = ""  # exit status found, for unsafe
    reason: str = ""  # for inconclusive
    stages: list = field(default_factory=list)

    def __str__(self):
        m, n = self.stage
        if self.kind == "unsafe":
            return f"Unsafe at m={m}, n={n} (status {self.status} reachable)"
        if self.kind == "inconclusive":
            return f"Inconclusive at m={m}, n={n} ({self.reason})"
        return f"Safe at m={m}, n={n}"

    def to_json(self):
        return {
            "verdict": self.kind, "m": self.stage[0], "n": self.stage[1],
            "status": self.status or None, "reason": self.reason or None,
            "stages": [s.to_json() for s in self.stages],
        }


@dataclass
class Config:
    m0: int = None
    n0: int = 3
    max_m: int = None
    max_n: int = 8
    timeout: float = 60.0
    solver: str = None
    concurrent: bool = False

    def resolved(self, prog):
        m0 = self.m0 if self.m0 is not None else count_new(prog)
        max_m = self.max_m if self.max_m is not None else m0 + 2
        return m0, self.n0, max_m, self.max_n


def count_new(prog):
    return sum(1 for s in prog.statements.values() if isinstance(s, lang.New))


def _undecided(q):
    return SOLVER_TIMEOUT if q.result.status == smt.TIMEOUT else SOLVER_UNKNOWN


def verify_memory_safety(prog, k, cfg=None, precond=None, log=None):
    """Search stages (m, n) until E is found, or M and O are both ruled out, or budgets run out."""
    cfg = cfg or Config()
    m, n, max_m, max_n = cfg.resolved(prog)
    if m > max_m or n > max_n:
        raise ValueError("budgets must not be below the starting values")
    stages = []

    def ask(status, m, n):
        return check_exit_status(prog, k, m, n, {status}, precond, cfg.timeout, cfg.solver)

    while True:
        stage = Stage(m, n)
        stages.append(stage)
        if cfg.concurrent:
            with ThreadPoolExecutor(3) as pool:
                futures = {s: pool.submit(ask, s, m, n) for s in "EMO"}
                stage.answers = {s: f.result() for s, f in futures.items()}
        else:
            stage.answers["E"] = ask("E", m, n)
        if log:
            log(stage)
        e = stage.answers["E"]
        if e.answer == POSITIVE:
            return Verdict("unsafe", (m, n), status="E", stages=stages)
        if e.answer == UNKNOWN:
            return Verdict("inconclusive", (m, n), reason=_undecided(e), stages=stages)
        for s in "MO":
            if s not in stage.answers:
                stage.answers[s] = ask(s, m, n)
                if log:
                    log(stage)
            if stage.answers[s].answer == UNKNOWN:
                return Verdict("inconclusive", (m, n), reason=_undecided(stage.answers[s]), stages=stages)
        grow_m = stage.answers["M"].answer == POSITIVE
        grow_n = stage.answers["O"].answer == POSITIVE
        if not grow_m and not grow_n:
            return Verdict("safe", (m, n), stages=stages)
        m, n = m + grow_m, n + grow_n
        if m > max_m or n > max_n:
            return Verdict("inconclusive", (stage.m, stage.n), reason=BUDGET_EXHAUSTED, stages=stages)

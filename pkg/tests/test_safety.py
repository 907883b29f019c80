import unittest
from unittest import mock

from knitcheck import corpus, interp, lang, safety, smt

from support import needs_solver

EXIT_ONLY = "pointer h\nfields next\n0: exit;"
DEREF_HEAD = "pointer h\nfields next\n0: h := h->next;\n1: exit;"


def answer(kind):
    status = {safety.POSITIVE: smt.UNSAT, safety.NEGATIVE: smt.SAT, "timeout": smt.TIMEOUT}.get(kind, smt.UNKNOWN)
    return safety.Query(safety.UNKNOWN if kind == "timeout" else kind, smt.SolveResult(status))


class ScriptedSolver:
    """Answers exit-status queries from a function of (status, m, n) and records the calls."""

    def __init__(self, rule):
        self.rule = rule
        self.calls = []

    def __call__(self, prog, k, m, n, ex_set, precond=None, timeout=60.0, solver=None):
        (status,) = ex_set
        self.calls.append((status, m, n))
        return answer(self.rule(status, m, n))


def verify(rule, **cfg):
    fake = ScriptedSolver(rule)
    with mock.patch.object(safety, "check_exit_status", fake):
        v = safety.verify_memory_safety(corpus.load("list_remove"), 1, safety.Config(**cfg))
    return v, fake.calls


P, N = safety.POSITIVE, safety.NEGATIVE


class LoopTest(unittest.TestCase):
    def test_error_first(self):
        v, calls = verify(lambda s, m, n: P)
        self.assertEqual(v.kind, "unsafe")
        self.assertEqual(v.status, "E")
        self.assertEqual(v.stage, (0, 3))
        self.assertEqual(calls, [("E", 0, 3)])

    def test_safe_at_first_stage(self):
        v, calls = verify(lambda s, m, n: N)
        self.assertEqual(v.kind, "safe")
        self.assertEqual([c[0] for c in calls], ["E", "M", "O"])

    def test_overflow_bumps_n(self):
        v, calls = verify(lambda s, m, n: P if s == "O" and n < 4 else N)
        self.assertEqual((v.kind, v.stage), ("safe", (0, 4)))
        self.assertEqual([(s.m, s.n) for s in v.stages], [(0, 3), (0, 4)])

    def test_both_bumped(self):
        v, _ = verify(lambda s, m, n: P if s in "MO" and m + n < 5 else N)
        self.assertEqual([(s.m, s.n) for s in v.stages], [(0, 3), (1, 4)])
        self.assertEqual(v.kind, "safe")

    def test_budget_exhausted(self):
        v, _ = verify(lambda s, m, n: P if s == "O" else N, max_n=5)
        self.assertEqual(v.kind, "inconclusive")
        self.assertEqual(v.reason, safety.BUDGET_EXHAUSTED)
        self.assertEqual(v.stage, (0, 5))

    def test_unknown_and_timeout(self):
        for kind, reason in (("unknown", safety.SOLVER_UNKNOWN), ("timeout", safety.SOLVER_TIMEOUT)):
            for where in "EMO":
                v, calls = verify(lambda s, m, n: kind if s == where else N)
                self.assertEqual((v.kind, v.reason), ("inconclusive", reason))
                self.assertEqual(calls[-1][0], where)

    def test_error_found_after_growth(self):
        v, _ = verify(lambda s, m, n: P if (s == "O" and n < 6) or (s == "E" and n == 6) else N)
        self.assertEqual((v.kind, v.stage), ("unsafe", (0, 6)))

    def test_concurrent_matches_sequential(self):
        rule = lambda s, m, n: P if s == "O" and n < 5 else N
        a, _ = verify(rule)
        b, calls = verify(rule, concurrent=True)
        self.assertEqual((a.kind, a.stage), (b.kind, b.stage))
        self.assertEqual(sorted(calls), sorted((s, 0, n) for n in (3, 4, 5) for s in "EMO"))

    def test_bad_budgets(self):
        with self.assertRaises(ValueError):
            verify(lambda s, m, n: N, n0=5, max_n=4)
        with self.assertRaises(ValueError):
            verify(lambda s, m, n: N, m0=2, max_m=1)

    def test_stages_increase(self):
        import itertools

        for pattern in itertools.product([P, N], repeat=4):
            rule = lambda s, m, n: pattern[(m + n) % 4] if s in "MO" else N
            v, _ = verify(rule, max_n=6)
            pairs = [(s.m, s.n) for s in v.stages]
            for (m1, n1), (m2, n2) in zip(pairs, pairs[1:]):
                self.assertTrue(m1 <= m2 and n1 <= n2 and (m1, n1) != (m2, n2))

    def test_verdict_json(self):
        v, _ = verify(lambda s, m, n: P if s == "O" and n < 4 else N)
        doc = v.to_json()
        self.assertEqual(doc["verdict"], "safe")
        self.assertEqual([(s["m"], s["n"]) for s in doc["stages"]], [(0, 3), (0, 4)])
        self.assertEqual(doc["stages"][0]["queries"]["O"]["answer"], P)


class ConfigTest(unittest.TestCase):
    def test_defaults(self):
        self.assertEqual(safety.Config().resolved(corpus.load("bst_insert")), (1, 3, 3, 8))
        self.assertEqual(safety.Config().resolved(corpus.load("list_remove")), (0, 3, 2, 8))

    def test_count_new(self):
        self.assertEqual(safety.count_new(corpus.load("bst_insert")), 1)
        self.assertEqual(safety.count_new(corpus.load("list_remove")), 0)

    def test_solver_error_propagates(self):
        with self.assertRaises(smt.SolverUnavailable):
            safety.check_exit_status(corpus.load("list_remove"), 1, 0, 2, {"E"}, solver="/bin/echo")


def program(text):
    return lang.normalize_program(lang.parse_program(text))


@needs_solver
class SolverTest(unittest.TestCase):
    def test_exit_only_is_safe(self):
        v = safety.verify_memory_safety(program(EXIT_ONLY), 1, safety.Config(timeout=120))
        self.assertEqual((v.kind, v.stage), ("safe", (0, 3)))

    def test_faulting_program_is_not_safe(self):
        prog = program(DEREF_HEAD)
        self.assertEqual(interp.run(prog, interp.list_tree([])).outcome, "error")
        v = safety.verify_memory_safety(prog, 1, safety.Config(timeout=120))
        self.assertEqual(v.kind, "unsafe")

    def test_clean_exit_of_removal(self):
        q = safety.check_exit_status(corpus.load("list_remove"), 1, 0, 4, {"C"}, timeout=300)
        self.assertEqual(q.answer, safety.POSITIVE)

    def test_no_error_in_removal(self):
        q = safety.check_exit_status(corpus.load("list_remove"), 1, 0, 4, {"E"}, timeout=300)
        self.assertEqual(q.answer, safety.NEGATIVE)


if __name__ == "__main__":
    unittest.main()

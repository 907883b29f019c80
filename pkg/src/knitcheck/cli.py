"""Command-line front end: run, encode, verify, kt-dump."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import corpus, interp, kt, lang, safety, sdta, smt
from .chc import build_cex, build_cpre
from .chc.terms import SortError

EX_USAGE = 64
EX_SOFTWARE = 70


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _global_options(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--solver", default=default, help="Horn solver executable (default: $KNITCHECK_SOLVER or z3)")
    parser.add_argument("--timeout", type=float, default=argparse.SUPPRESS if suppress else 60.0,
                        help="per-query solver timeout in seconds")
    parser.add_argument("--json", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="machine-readable output")


def _data_assignment(text):
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    low = value.lower()
    if low in ("true", "false"):
        return name, low == "true"
    try:
        return name, int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value of {name} must be an integer or boolean") from None


def _program_args(p):
    p.add_argument("program", help="program file, or the name of a bundled example")


def _shape_args(p, need_n=True):
    p.add_argument("-k", type=int, help="tree arity (default: number of pointer fields)")
    p.add_argument("-m", type=int, help="auxiliary node budget (default: number of `new` statements)")
    if need_n:
        p.add_argument("-n", type=int, default=3, help="frames per node log (default 3)")


def _input_args(p):
    p.add_argument("tree", help="input tree as JSON: {\"arity\": k, \"nodes\": {\"\": 5, \"1\": 3}} or {\"list\": [..]}")
    p.add_argument("--set", dest="data", action="append", type=_data_assignment, default=[], metavar="NAME=VALUE",
                   help="initial value of a data variable (repeatable)")


def build_parser():
    parser = _Parser(prog="knitcheck", description="Memory-safety verification of tree-manipulating programs.")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="interpret a program on one input")
    _global_options(run, suppress=True)
    _program_args(run)
    _input_args(run)
    run.add_argument("--fuel", type=int, default=10_000, help="maximum number of transitions")
    run.add_argument("--quiet", action="store_true", help="print only the outcome")

    enc = sub.add_parser("encode", help="write the Horn clause system for an exit-status query")
    _global_options(enc, suppress=True)
    _program_args(enc)
    _shape_args(enc)
    enc.add_argument("--ex", default="E", help="exit statuses to ask about, a subset of CEOM (default E)")
    enc.add_argument("--precondition", help=".sdta file or builtin automaton name")
    enc.add_argument("-o", "--output", help="output .smt2 path (default: standard output)")
    enc.add_argument("--solve", action="store_true", help="also run the solver on the system")

    ver = sub.add_parser("verify", help="run the iterative memory-safety check")
    _global_options(ver, suppress=True)
    _program_args(ver)
    ver.add_argument("-k", type=int, help="tree arity (default: number of pointer fields)")
    ver.add_argument("--m0", type=int, help="starting m (default: number of `new` statements)")
    ver.add_argument("--n0", type=int, default=3, help="starting n (default 3)")
    ver.add_argument("--max-m", type=int, help="largest m tried (default m0+2)")
    ver.add_argument("--max-n", type=int, default=8, help="largest n tried (default 8)")
    ver.add_argument("--precondition", help=".sdta file or builtin automaton name")
    ver.add_argument("--concurrent", action="store_true", help="issue the three queries of a stage together")

    dump = sub.add_parser("kt-dump", help="print the knitted-tree of one execution as JSON")
    _global_options(dump, suppress=True)
    _program_args(dump)
    _input_args(dump)
    _shape_args(dump)
    dump.add_argument("--dot", action="store_true", help="print the lace as a Graphviz graph instead")
    return parser


# ---------------------------------------------------------------------------
# loading


def load_program(spec):
    if os.path.exists(spec):
        with open(spec) as fh:
            text = fh.read()
    elif spec in corpus.NAMES:
        text = corpus.source(spec)
    else:
        raise UsageError(f"no such program file: {spec}")
    try:
        prog = lang.parse_program(text)
    except lang.LangError as exc:
        raise UsageError(f"{spec}: {exc}") from None
    report = lang.validate_program(prog)
    if not report.ok:
        raise UsageError(f"{spec}: " + "; ".join(f"{k}: {d}" for k, d in report.violations))
    return prog


def load_tree(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read tree file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None
    try:
        if isinstance(doc, dict) and "list" in doc:
            return interp.list_tree(doc["list"])
        return interp.DataTree.from_json(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: bad tree: {exc}") from None


def load_precondition(spec):
    if spec is None:
        return None
    try:
        return sdta.load(spec)
    except OSError as exc:
        raise UsageError(f"cannot read precondition: {exc}") from None
    except (SyntaxError, SortError) as exc:
        raise UsageError(f"{spec}: {exc}") from None


def _data_env(prog, pairs):
    sorts = prog.data_sorts
    env = {}
    for name, value in pairs:
        if name not in sorts:
            raise UsageError(f"unknown data variable {name!r}")
        if (sorts[name] == "bool") != isinstance(value, bool):
            raise UsageError(f"{name} expects a {sorts[name]} value")
        env[name] = value
    return env


def _k(args, prog):
    return args.k if args.k is not None else len(prog.pointer_fields)


# ---------------------------------------------------------------------------
# commands


def _describe(c, prog):
    ptrs = " ".join(f"{p}={'nil' if c.ptr_env[p] is None else '#' + str(c.ptr_env[p])}" for p in prog.pointer_vars)
    data = " ".join(f"{d}={c.data_env[d]}" for d in prog.data_names)
    return f"pc={c.pc} {ptrs} {data}".rstrip()


def cmd_run(args, out):
    prog = load_program(args.program)
    tree = load_tree(args.tree)
    env = _data_env(prog, args.data)
    try:
        ex = interp.run(prog, tree, env, fuel=args.fuel)
    except interp.ArityError as exc:
        raise UsageError(str(exc)) from None
    code = {"final": 0, "error": 2, "fuel": 3}[ex.outcome]
    if args.json:
        doc = {"outcome": ex.outcome, "reason": ex.reason or None, "steps": len(ex.steps),
               "trace": [] if args.quiet else [_describe(c, prog) for c in ex.steps]}
        print(json.dumps(doc, indent=2), file=out)
    else:
        if not args.quiet:
            for c in ex.steps:
                print(_describe(c, prog), file=out)
        line = f"outcome: {ex.outcome}"
        if ex.reason:
            line += f" ({ex.reason})"
        print(line, file=out)
    return code


def _build_system(args):
    prog = lang.normalize_program(load_program(args.program))
    k = _k(args, prog)
    m = args.m if args.m is not None else safety.count_new(prog)
    ex = set(args.ex.upper())
    pre = load_precondition(args.precondition)
    try:
        if pre is None:
            return build_cex(prog, k, m, args.n, ex)
        return build_cpre(prog, k, m, args.n, ex, pre)
    except (kt.ParamError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_encode(args, out):
    system = _build_system(args)
    text = smt.emit_smtlib(system)
    size = len(text.encode())
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    elif not args.json:
        out.write(text)
    info = {"clauses": len(system.clauses), "bytes": size, "params": system.params}
    if args.solve:
        r = smt.solve(text, args.timeout, args.solver)
        info["solver"] = r.status
        info["seconds"] = round(r.elapsed, 3)
    if args.json:
        print(json.dumps(info, indent=2), file=out)
    else:
        msg = f"{info['clauses']} clauses, {size} bytes"
        if args.solve:
            msg += f", solver: {info['solver']} ({info['seconds']}s)"
        print(msg, file=sys.stderr if not args.output else out)
    return 0


def cmd_verify(args, out):
    prog = lang.normalize_program(load_program(args.program))
    k = _k(args, prog)
    cfg = safety.Config(args.m0, args.n0, args.max_m, args.max_n, args.timeout, args.solver, args.concurrent)
    m0, n0, max_m, max_n = cfg.resolved(prog)
    if m0 > max_m or n0 > max_n:
        raise UsageError("budgets must not be below the starting values")
    pre = load_precondition(args.precondition)
    if pre is not None and pre.arity != k:
        raise UsageError(f"precondition arity {pre.arity} differs from k={k}")

    def progress(stage):
        if not args.json:
            answers = " ".join(f"{s}:{q.answer}" for s, q in stage.answers.items())
            print(f"stage m={stage.m} n={stage.n} {answers}", file=sys.stderr)

    try:
        verdict = safety.verify_memory_safety(prog, k, cfg, pre, progress)
    except smt.SolverUnavailable as exc:
        print(f"knitcheck: solver error: {exc}", file=sys.stderr)
        return EX_SOFTWARE
    if args.json:
        print(json.dumps(verdict.to_json(), indent=2), file=out)
    else:
        print(verdict, file=out)
    return {"safe": 0, "unsafe": 1, "inconclusive": 3}[verdict.kind]


def cmd_kt_dump(args, out):
    prog = lang.normalize_program(load_program(args.program))
    tree = load_tree(args.tree)
    env = _data_env(prog, args.data)
    k = _k(args, prog)
    m = args.m if args.m is not None else safety.count_new(prog)
    try:
        K = kt.encode_run(prog, tree, env, m, args.n, k)
    except (kt.KTError, interp.ArityError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    print(K.to_dot() if args.dot else kt.dump_json(K), file=out)
    return 0


COMMANDS = {"run": cmd_run, "encode": cmd_encode, "verify": cmd_verify, "kt-dump": cmd_kt_dump}


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify" or (args.command == "encode" and args.solve):
            smt.solver_command(args.solver)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"knitcheck: {exc}", file=sys.stderr)
        return EX_USAGE
    except smt.SolverUnavailable as exc:
        print(f"knitcheck: {exc}", file=sys.stderr)
        return EX_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())

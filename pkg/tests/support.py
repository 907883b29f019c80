import unittest

from knitcheck import smt


def have_solver():
    try:
        smt.solver_command()
    except smt.SolverUnavailable:
        return False
    return True


needs_solver = unittest.skipUnless(have_solver(), "no Horn solver on PATH")

BST_TEXT = """\
pointer root, p, p'
fields left, right
int key, value
0: p' := root;
1: while (p' != nil) do
2:   value := p'->data;
3:   p := p';
4:   if (key <= value) then
5:     p' := p'->left;
6: else
7:     p' := p'->right;
8: fi;
9: od;
10: new p';
11: p'->data := key;
12: if (root = nil) then
13:   root := p';
14: else
15:   if (key <= value) then
16:     p->left := p';
17:   else
18:     p->right := p';
19:   fi;
20: fi;
21: exit;
"""

LIST_TEXT = """\
pointer head, prev
fields next
int key, value
0: prev := head;
1: while (head != nil) do
2:   value := head->data;
3:   if (key = value) then
4:     head := head->next;
5:     prev->next := head;
6:     exit;
   else
7:     prev := head;
8:     head := head->next;
   fi;
   od;
9: exit;
"""


def kt_configuration(K):
    """The configuration recorded at the end of a knitted-tree's lace, in interpreter form."""
    from knitcheck import interp, kt

    heap, pv, d, pc = kt.kt_configuration_view(K)
    return interp.Configuration(heap, pv, d, pc)


def oracle_runs(name, n, max_nodes, keys, data_keys=None):
    """(tree, key, execution, knitted-tree) for every input of a bundled program."""
    from knitcheck import corpus, interp, kt

    k, m = corpus.SHAPES[name]
    prog = corpus.load(name)
    for tree in interp.all_trees(k, max_nodes, keys):
        for key in data_keys or keys:
            ex = interp.run(prog, tree, {"key": key}, fuel=500)
            yield tree, key, ex, kt.encode_run(prog, tree, {"key": key}, m, n, k)


def same_configuration(a, b):
    from knitcheck import interp

    return (a.pc, a.data_env, interp.canonical_heap(a)) == (b.pc, b.data_env, interp.canonical_heap(b))


def kt_problems(K):
    """Lace problems plus every parent-child pair whose logs do not fit together."""
    from knitcheck import kt

    problems = kt.lace_well_formed(K)
    for c in sorted(K.backbone):
        if c and not kt.check_consistent_child(K.logs[c], c[-1], K.logs[c[:-1]], K.program, K.k, K.m, K.n):
            problems.append(f"child {c} is inconsistent with its parent")
    return problems

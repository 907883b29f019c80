import unittest
from functools import lru_cache

from hypothesis import given, settings, strategies as st

from knitcheck import interp, lang

from support import BST_TEXT, LIST_TEXT

BUGGY_LIST = LIST_TEXT.replace("0: prev := head;\n", "")


def parse(text):
    return lang.parse_program(text)


@lru_cache(maxsize=None)
def exact_count(arity, size):
    """k-ary trees with exactly `size` nodes: a root plus `arity` subtrees sharing size-1 nodes."""
    if size == 0:
        return 1

    def spread(parts, total):
        if parts == 0:
            return 1 if total == 0 else 0
        return sum(exact_count(arity, s) * spread(parts - 1, total - s) for s in range(total + 1))

    return spread(arity, size - 1)


class InitialConfigurationTest(unittest.TestCase):
    def test_empty_tree(self):
        c = interp.initial_configuration(parse(BST_TEXT), interp.DataTree.make(2, {}), {"key": 5})
        self.assertEqual(c.ptr_env, {"root": None, "p": None, "p'": None})
        self.assertEqual(c.pc, 0)
        self.assertEqual(c.data_env["key"], 5)
        self.assertEqual(c.heap.nodes, set())

    def test_single_node(self):
        c = interp.initial_configuration(parse(LIST_TEXT), interp.list_tree([3]))
        head = c.ptr_env["head"]
        self.assertIsNotNone(head)
        self.assertEqual(c.heap.data[head], 3)
        self.assertIsNone(c.ptr_env["prev"])
        self.assertEqual(c.pc, 0)

    def test_other_pointers_nil(self):
        c = interp.initial_configuration(parse(BST_TEXT), interp.DataTree.make(2, {(): 2, (1,): 1}))
        self.assertIsNone(c.ptr_env["p"])
        self.assertIsNone(c.ptr_env["p'"])
        root = c.ptr_env["root"]
        self.assertEqual(c.heap.data[c.heap.get(root, "left")], 1)
        self.assertIsNone(c.heap.get(root, "right"))

    def test_arity_error(self):
        with self.assertRaises(interp.ArityError):
            interp.initial_configuration(parse(LIST_TEXT), interp.DataTree.make(2, {(): 1}))


class RunTest(unittest.TestCase):
    def test_buggy_removal_of_first_node(self):
        ex = interp.run(parse(BUGGY_LIST), interp.list_tree([7]), {"key": 7})
        self.assertEqual(ex.outcome, "error")
        self.assertEqual(ex.final.pc, 5)

    def test_exit_only(self):
        ex = interp.run(parse("pointer h\n0: exit;"), interp.DataTree.make(0, {}))
        self.assertEqual(ex.outcome, "final")
        self.assertEqual(len(ex.steps), 1)

    def test_remove_second(self):
        prog = parse(LIST_TEXT)
        ex = interp.run(prog, interp.list_tree([1, 2]), {"key": 2})
        self.assertEqual(ex.outcome, "final")
        self.assertEqual(ex.final.pc, 6)
        kept = interp.DataTree.make(1, {(): 1})
        c = ex.final.copy()
        c.ptr_env["head"] = c.ptr_env["prev"]
        self.assertEqual(interp.heap_as_tree(c, prog), kept)
        self.assertEqual(len(ex.final.heap.nodes), 2)

    def test_insert_into_empty(self):
        prog = parse(BST_TEXT)
        ex = interp.run(prog, interp.DataTree.make(2, {}), {"key": 7})
        self.assertEqual(ex.outcome, "final")
        self.assertEqual([c.pc for c in ex.steps], [0, 1, 10, 11, 12, 13, 21])
        c = ex.final
        self.assertEqual(len(c.heap.nodes), 1)
        (node,) = c.heap.nodes
        self.assertEqual(c.ptr_env["root"], node)
        self.assertEqual(c.heap.data[node], 7)

    def test_fuel(self):
        prog = parse("pointer x\n0: while (x = x) do 1: skip; od;\n2: exit;")
        ex = interp.run(prog, interp.DataTree.make(0, {}), fuel=100)
        self.assertEqual(ex.outcome, "fuel")

    def test_remove_from_empty_list(self):
        ex = interp.run(parse(LIST_TEXT), interp.list_tree([]), {"key": 1})
        self.assertEqual(ex.outcome, "final")
        self.assertEqual([c.pc for c in ex.steps], [0, 1, 9])

    def test_free_nil_is_error(self):
        ex = interp.run(parse("pointer h\n0: free h;\n1: exit;"), interp.DataTree.make(0, {}))
        self.assertEqual(ex.outcome, "error")

    def test_free_clears_aliases(self):
        prog = parse("pointer h, a\nfields next\nint x\n0: a := h;\n1: free h;\n2: x := a->data;\n3: exit;")
        ex = interp.run(prog, interp.list_tree([4]))
        self.assertEqual(ex.outcome, "error")
        self.assertEqual(ex.final.pc, 2)
        self.assertIsNone(ex.final.ptr_env["a"])

    def test_free_clears_fields(self):
        prog = parse("pointer h, a\nfields next\n0: a := h->next;\n1: free a;\n2: a := h->next;\n3: exit;")
        ex = interp.run(prog, interp.list_tree([1, 2]))
        self.assertEqual(ex.outcome, "final")
        self.assertIsNone(ex.final.ptr_env["a"])
        self.assertEqual(len(ex.final.heap.nodes), 1)

    def test_new_node_defaults(self):
        prog = parse("pointer h, a\nfields next\nint x\n0: new a;\n1: x := a->data;\n2: exit;")
        ex = interp.run(prog, interp.list_tree([]), {"x": 9})
        self.assertEqual(ex.final.data_env["x"], 0)
        self.assertIsNone(ex.final.heap.get(ex.final.ptr_env["a"], "next"))


class TreeShapesTest(unittest.TestCase):
    def test_counts(self):
        for arity in (1, 2, 3):
            for max_nodes in range(6):
                want = sum(exact_count(arity, s) for s in range(max_nodes + 1))
                self.assertEqual(len(interp.tree_shapes(arity, max_nodes)), want, (arity, max_nodes))

    def test_prefix_closed(self):
        for shape in interp.tree_shapes(2, 4):
            for addr in shape:
                if addr:
                    self.assertIn(addr[:-1], shape)


trees = st.integers(1, 3).flatmap(
    lambda k: st.sampled_from(interp.tree_shapes(k, 5)).flatmap(
        lambda shape: st.lists(st.integers(-3, 3), min_size=len(shape), max_size=len(shape)).map(
            lambda keys: interp.DataTree.make(k, dict(zip(sorted(shape), keys)))
        )
    )
)


class InterpProperties(unittest.TestCase):
    @settings(max_examples=100, deadline=None)
    @given(trees)
    def test_json_round_trip(self, tree):
        self.assertEqual(interp.DataTree.from_json(tree.to_json()), tree)

    @settings(max_examples=60, deadline=None)
    @given(trees.filter(lambda t: t.arity <= 2), st.integers(-3, 3))
    def test_deterministic(self, tree, key):
        prog = parse(BST_TEXT)
        a = interp.run(prog, tree, {"key": key})
        b = interp.run(prog, tree, {"key": key})
        self.assertEqual(a.outcome, b.outcome)
        self.assertEqual(a.steps, b.steps)

    @settings(max_examples=60, deadline=None)
    @given(trees.filter(lambda t: t.arity <= 2 and len(t) > 0), st.integers(-3, 3))
    def test_frame_rule(self, tree, key):
        # a step that does not mention node u leaves its data and fields alone
        prog = lang.normalize_program(parse(BST_TEXT))
        c = interp.initial_configuration(prog, tree, {"key": key})
        for _ in range(200):
            s = prog.statements[c.pc]
            r = interp.step(prog, c)
            if r.kind != "next":
                break
            touched = set()
            if isinstance(s, (lang.FieldNil, lang.FieldWrite, lang.DataWrite, lang.Free)):
                touched.add(c.ptr_env[s.var])
            for u in c.heap.nodes - touched:
                if u not in r.config.heap.nodes:
                    continue
                self.assertEqual(r.config.heap.data[u], c.heap.data[u])
                for f in prog.pointer_fields:
                    self.assertEqual(r.config.heap.get(u, f), c.heap.get(u, f))
            c = r.config

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=1, max_size=4), st.sampled_from(["x := a->data", "a->data := 1", "a->next := nil", "free a"]))
    def test_dangling_alias_errors(self, keys, use):
        prog = parse(f"pointer h, a\nfields next\nint x\n0: a := h;\n1: free h;\n2: {use};\n3: exit;")
        self.assertEqual(interp.run(prog, interp.list_tree(keys)).outcome, "error")


if __name__ == "__main__":
    unittest.main()

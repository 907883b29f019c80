"""Bundled example programs."""

from importlib import resources

from .. import lang

NAMES = ("list_remove", "list_remove_bug", "bst_insert", "bst_insert_bug")

# (k, m) used for each bundled program
SHAPES = {
    "list_remove": (1, 0),
    "list_remove_bug": (1, 0),
    "bst_insert": (2, 1),
    "bst_insert_bug": (2, 1),
}


def source(name):
    return resources.files(__name__).joinpath(name + ".kwp").read_text()


def load(name, normalize=True):
    prog = lang.parse_program(source(name))
    return lang.normalize_program(prog) if normalize else prog

from .predicates import PredicateLibrary, LogView, eval_consistent_child
from .system import (
    CHC, CHCSystem, EmptyExitSet, ArityMismatch, ParamMismatch, RelationApp,
    build_ckt, build_cex, build_cpre, build_membership_query, build_predicates,
)

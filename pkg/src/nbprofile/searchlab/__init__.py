"""Instrumented multi-neighborhood local search on a small routing problem."""

from .instance import (
    InstanceError,
    RoutingInstance,
    Solution,
    brute_force_optimum,
    generate_instance,
    initial_solution,
    read_instance,
    read_lower_bound,
    write_instance,
    write_lower_bound,
)
from .lahc import (
    MoveKind,
    MoveOutcome,
    RunResult,
    SearchConfig,
    classify_move,
    lahc_run,
    reference_lower_bound,
    select_neighborhood,
)
from .neighborhoods import Neighborhood, apply_neighborhood, build_roster

__all__ = [
    "InstanceError", "RoutingInstance", "Solution", "brute_force_optimum", "generate_instance",
    "initial_solution", "read_instance", "read_lower_bound", "write_instance", "write_lower_bound",
    "MoveKind", "MoveOutcome", "RunResult", "SearchConfig", "classify_move", "lahc_run",
    "reference_lower_bound", "select_neighborhood", "Neighborhood", "apply_neighborhood", "build_roster",
]

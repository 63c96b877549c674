"""Mixed-integer programming: model builder, MPS export, embedded and external solvers."""
from .external import ExternalSolverError, highs_available, highs_command, parse_solution, solve_external
from .model import Direction, LinearConstraint, MatrixForm, MipModel, Sense, VarKind, VarRef
from .mps import write_mps
from .simplex import LPStatus, solve_lp
from .solver import (
    Branching,
    Search,
    SolveResult,
    SolverConfig,
    Status,
    brute_force_oracle,
    solve,
    solve_lp_relaxation,
)

__all__ = [
    "Branching",
    "Direction",
    "ExternalSolverError",
    "LPStatus",
    "LinearConstraint",
    "MatrixForm",
    "MipModel",
    "Search",
    "Sense",
    "SolveResult",
    "SolverConfig",
    "Status",
    "VarKind",
    "VarRef",
    "brute_force_oracle",
    "highs_available",
    "highs_command",
    "parse_solution",
    "solve",
    "solve_external",
    "solve_lp",
    "solve_lp_relaxation",
    "write_mps",
]

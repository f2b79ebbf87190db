"""Bregman-type solvers and diagnostics for discrete Gromov-Wasserstein problems."""

from .core import (
    Algorithm,
    Coupling,
    DistanceMatrix,
    Geometry,
    Graph,
    IterationRecord,
    NumericalInstabilityError,
    ProbabilityVector,
    SolveReport,
    SolverConfig,
    SplitIterate,
    product_coupling,
    validate_inputs,
)
from .solvers import (
    bapg_solve,
    bpg_solve,
    ebpg_solve,
    fw_solve,
    gw_gradient,
    gw_objective,
    hbpg_solve,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "Coupling", "DistanceMatrix", "Geometry", "Graph", "IterationRecord",
    "NumericalInstabilityError", "ProbabilityVector", "SolveReport", "SolverConfig",
    "SplitIterate", "product_coupling", "validate_inputs",
    "bapg_solve", "bpg_solve", "ebpg_solve", "fw_solve", "gw_gradient", "gw_objective",
    "hbpg_solve", "solve",
]

"""GW solvers and the objective/gradient evaluations they share."""

from ..core import Algorithm, SolveReport, SolverConfig
from .bregman import bapg_solve, bpg_solve, ebpg_solve, hbpg_solve
from .fw import fw_solve, line_search
from .objective import (
    bilinear_value,
    bregman_divergence,
    gw_gradient,
    gw_objective,
    lipschitz_bound,
    penalty_value,
)

_DISPATCH = {
    Algorithm.BAPG: bapg_solve,
    Algorithm.BPG: bpg_solve,
    Algorithm.EBPG: ebpg_solve,
    Algorithm.HBPG: hbpg_solve,
    Algorithm.FW: fw_solve,
}


def solve(D_X, D_Y, mu, nu, config: SolverConfig, init=None, callback=None) -> SolveReport:
    """Run the solver selected by ``config.algorithm``."""
    return _DISPATCH[config.algorithm](D_X, D_Y, mu, nu, config, init=init, callback=callback)


__all__ = [
    "bapg_solve", "bpg_solve", "ebpg_solve", "hbpg_solve", "fw_solve", "line_search", "solve",
    "bilinear_value", "bregman_divergence", "gw_gradient", "gw_objective", "lipschitz_bound",
    "penalty_value",
]

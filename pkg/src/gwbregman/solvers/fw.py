"""Frank-Wolfe with an exact LP oracle and closed-form line search."""

from __future__ import annotations

import time

import numpy as np

from ..core import Algorithm, Coupling, IterationRecord, SolveReport, SolverConfig
from ..diagnostics import marginal_infeasibility
from ..projections import exact_ot
from .bregman import Callback, _initial, _prepare, _rel_change, _residual
from .objective import gw_objective


def line_search(a: float, b: float) -> float:
    """Minimiser over ``[0, 1]`` of ``phi(g) = b*g + a*g**2``.

    For ``a <= 0`` the minimum sits at an endpoint: 1 if ``phi(1) <= phi(0)``
    (and, when ``a == 0``, only if ``b < 0``), otherwise 0.
    """
    if a > 0:
        return float(min(max(-b / (2 * a), 0.0), 1.0))
    if a == 0:
        return 1.0 if b < 0 else 0.0
    return 1.0 if a + b <= 0 else 0.0


def fw_solve(D_X, D_Y, mu, nu, config: SolverConfig | None = None, init=None,
             callback: Callback | None = None) -> SolveReport:
    """Conditional gradient over the transport polytope.

    Every iterate is a convex combination of feasible points, so it stays
    exactly feasible.  The objective is quadratic, so the line search along
    ``d = s - pi`` is solved in closed form.
    """
    cfg = config or SolverConfig(algorithm=Algorithm.FW)
    A, B, mu, nu = _prepare(D_X, D_Y, mu, nu)
    P = _initial(init, mu, nu)
    trace: list[IterationRecord] = []
    converged = False
    t0 = time.perf_counter()
    k = 0
    for k in range(1, cfg.max_iters + 1):
        grad = -2.0 * (A @ P @ B)
        S = exact_ot(grad, mu, nu)
        d = S - P
        b = float(np.sum(grad * d))
        a = -float(np.sum((A @ d @ B) * d))
        gamma = line_search(a, b)
        P_new = P + gamma * d
        rel = _rel_change(P_new, P)
        P = P_new
        trace.append(IterationRecord(
            iter=k,
            objective=gw_objective(A, B, P),
            marginal_infeasibility=marginal_infeasibility(P, mu, nu),
            split_gap=0.0,
            residual=_residual(cfg, k, A, B, P, mu, nu),
            rel_change=rel,
            elapsed_seconds=time.perf_counter() - t0,
        ))
        if callback is not None:
            callback(k, P, None)
        if rel <= cfg.rel_tol:
            converged = True
            break
    return SolveReport(Coupling(P), trace, converged, k, Algorithm.FW)

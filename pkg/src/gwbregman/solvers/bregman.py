"""Bregman-type GW solvers: BAPG, BPG (and BPG-S), eBPG and the hybrid hBPG."""

from __future__ import annotations

import logging
import time
from dataclasses import replace
from typing import Callable, Optional

import numpy as np

from ..core import (
    Algorithm,
    Coupling,
    Geometry,
    IterationRecord,
    NumericalInstabilityError,
    SolveReport,
    SolverConfig,
    SplitIterate,
    as_distance,
    as_probability,
    validate_inputs,
)
from ..diagnostics import luo_tseng_residual, marginal_infeasibility
from ..projections import (
    Axis,
    euclid_project,
    kl_scale,
    round_to_polytope,
    sinkhorn_project,
    sinkhorn_project_log,
)
from .objective import gw_objective, lipschitz_bound

logger = logging.getLogger(__name__)

# exp() overflows just above 709
EXP_LIMIT = 700.0

Callback = Callable[[int, np.ndarray, Optional[np.ndarray]], None]


def _prepare(D_X, D_Y, mu, nu):
    D_X, D_Y = as_distance(D_X), as_distance(D_Y)
    mu, nu = as_probability(mu), as_probability(nu)
    validate_inputs(D_X, D_Y, mu, nu)
    return D_X.entries, D_Y.entries, mu.weights, nu.weights


def _initial(init, mu, nu) -> np.ndarray:
    if init is None:
        return np.outer(mu, nu)
    P = np.array(init, dtype=np.float64)
    if P.shape != (mu.size, nu.size):
        raise ValueError(f"initial coupling has shape {P.shape}, expected {(mu.size, nu.size)}")
    return P


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    den = np.linalg.norm(old)
    return float(np.linalg.norm(new - old) / den) if den > 0 else float(np.linalg.norm(new))


def _residual(cfg: SolverConfig, k: int, A, B, P, mu, nu) -> Optional[float]:
    if cfg.residual_every and k % cfg.residual_every == 0:
        return luo_tseng_residual(A, B, P, mu, nu)
    return None


def _kl_potential(f_val: float, rho: float, P: np.ndarray, W: np.ndarray) -> Optional[float]:
    if np.any(P <= 0) or np.any(W <= 0):
        return None
    return f_val + rho * float(np.sum(P * np.log(P / W) - P + W))


def bapg_solve(D_X, D_Y, mu, nu, config: SolverConfig | None = None, init=None,
               callback: Callback | None = None) -> SolveReport:
    """Bregman alternating projected gradient.

    Alternates a projected step onto the row polytope (``pi`` half) and onto
    the column polytope (``w`` half).  The exponent is ``D_X w D_Y / rho``,
    the partial gradient of the bilinear split objective, so no factor 2.
    Convergence is measured on the ``w`` half; the returned coupling is the
    average of the halves.
    """
    cfg = config or SolverConfig(algorithm=Algorithm.BAPG)
    A, B, mu, nu = _prepare(D_X, D_Y, mu, nu)
    rho = cfg.rho
    entropy = cfg.geometry is Geometry.ENTROPY
    w = _initial(init, mu, nu)
    if entropy and np.any(w <= 0):
        raise ValueError("entropy geometry needs a strictly positive initial coupling")
    pi = w.copy()
    trace: list[IterationRecord] = []
    converged = False
    t0 = time.perf_counter()
    k = 0
    for k in range(1, cfg.max_iters + 1):
        G = (A @ w @ B) / rho
        if entropy:
            if G.max() > EXP_LIMIT:
                raise NumericalInstabilityError(
                    f"exponent {G.max():.1f} would overflow exp(); increase rho", "BAPG", k)
            pi_new = kl_scale(w * np.exp(G), mu, Axis.ROWS)
            H = (A @ pi_new @ B) / rho
            if H.max() > EXP_LIMIT:
                raise NumericalInstabilityError(
                    f"exponent {H.max():.1f} would overflow exp(); increase rho", "BAPG", k)
            w_new = kl_scale(pi_new * np.exp(H), nu, Axis.COLS)
        else:
            pi_new = euclid_project(w + G, mu, Axis.ROWS)
            H = (A @ pi_new @ B) / rho
            w_new = euclid_project(pi_new + H, nu, Axis.COLS)
        if not (np.all(np.isfinite(pi_new)) and np.all(np.isfinite(w_new))):
            raise NumericalInstabilityError("non-finite iterate", "BAPG", k)
        rel = _rel_change(w_new, w)
        pi, w = pi_new, w_new
        avg = (pi + w) / 2
        f_split = -float(np.sum(H * w)) * rho  # f(pi, w) from the cached D_X pi D_Y
        if entropy:
            potential = _kl_potential(f_split, rho, pi, w)
        else:
            potential = f_split + 0.5 * rho * float(np.sum((pi - w) ** 2))
        trace.append(IterationRecord(
            iter=k,
            objective=gw_objective(A, B, avg),
            marginal_infeasibility=marginal_infeasibility(avg, mu, nu),
            split_gap=float(np.linalg.norm(pi - w)),
            residual=_residual(cfg, k, A, B, avg, mu, nu),
            rel_change=rel,
            elapsed_seconds=time.perf_counter() - t0,
            potential=potential,
        ))
        if callback is not None:
            callback(k, pi, w)
        if rel <= cfg.rel_tol:
            converged = True
            break
    avg = (pi + w) / 2
    return SolveReport(
        final_coupling=Coupling(avg / avg.sum()),
        trace=trace,
        converged=converged,
        iterations_used=k,
        algorithm=Algorithm.BAPG,
        split=SplitIterate(Coupling(pi / pi.sum()), Coupling(w / w.sum())),
    )


def _project(log_kernel: np.ndarray, mu, nu, cfg: SolverConfig, name: str, k: int, warm=None):
    try:
        if cfg.log_domain:
            return sinkhorn_project_log(log_kernel, mu, nu, cfg.inner_tol, cfg.inner_iters, warm)
        # global shift is exact: the KL projection ignores a scalar factor on the kernel
        return sinkhorn_project(np.exp(log_kernel - log_kernel.max()), mu, nu,
                                cfg.inner_tol, cfg.inner_iters, warm)
    except NumericalInstabilityError as exc:
        raise NumericalInstabilityError(f"inner Sinkhorn failed ({exc})", name, k) from exc


def _feasible_loop(name: str, A, B, mu, nu, cfg: SolverConfig, P: np.ndarray,
                   log_kernel: Callable[[np.ndarray], np.ndarray],
                   callback: Callback | None, perturb: float = 0.0,
                   phase: int = 1, iter_offset: int = 0):
    n, m = P.shape
    trace: list[IterationRecord] = []
    converged = False
    failures = 0
    t0 = time.perf_counter()
    k = 0
    warm = None
    for k in range(1, cfg.max_iters + 1):
        # consecutive kernels differ little, so the previous column scaling is a good start
        res = _project(log_kernel(P), mu, nu, cfg, name, k + iter_offset, warm)
        # a single sweep must start from v = 1 to be the plain row-then-column scaling
        warm = res.scaling if cfg.inner_iters > 1 else None
        P_new = res.coupling
        if not res.converged:
            failures += 1
            if cfg.round_inner:
                # the inner cap was hit; round so the iterate stays feasible
                P_new = round_to_polytope(P_new, mu, nu)
        if perturb > 0:
            P_new = (1 - perturb) * P_new + perturb / (n * m)
        rel = _rel_change(P_new, P)
        P = P_new
        trace.append(IterationRecord(
            iter=k + iter_offset,
            objective=gw_objective(A, B, P),
            marginal_infeasibility=marginal_infeasibility(P, mu, nu),
            split_gap=0.0,
            residual=_residual(cfg, k, A, B, P, mu, nu),
            rel_change=rel,
            elapsed_seconds=time.perf_counter() - t0,
            phase=phase,
        ))
        if callback is not None:
            callback(k + iter_offset, P, None)
        if rel <= cfg.rel_tol:
            converged = True
            break
    if failures:
        logger.warning("%s: inner Sinkhorn missed tol=%g on %d of %d iterations%s",
                       name, cfg.inner_tol, failures, k,
                       "; those iterates were rounded onto the polytope" if cfg.round_inner else "")
    return P, trace, converged, k, failures


def bpg_solve(D_X, D_Y, mu, nu, config: SolverConfig | None = None, init=None,
              callback: Callback | None = None, *, _phase: int = 1, _offset: int = 0) -> SolveReport:
    """Bregman proximal gradient with a KL proximal term and Sinkhorn inner loop.

    Each step projects ``pi * exp(-t * grad f(pi))`` onto the transport
    polytope.  ``inner_iters=1`` with ``round_inner=False`` gives BPG-S, one
    row and one column scaling per step; with the default ``round_inner=True``
    each such iterate is additionally rounded onto the polytope.
    """
    cfg = config or SolverConfig(algorithm=Algorithm.BPG)
    A, B, mu, nu = _prepare(D_X, D_Y, mu, nu)
    P = _initial(init, mu, nu)
    L = lipschitz_bound(A, B)
    if L > 0 and cfg.step > 1.0 / L:
        logger.warning("BPG step %g exceeds 1/L_f = %g (L_f = %g); descent is not guaranteed",
                       cfg.step, 1.0 / L, L)
    t = cfg.step

    def log_kernel(P):
        with np.errstate(divide="ignore"):
            return np.log(P) + 2.0 * t * (A @ P @ B)

    P, trace, converged, k, failures = _feasible_loop(
        "BPG", A, B, mu, nu, cfg, P, log_kernel, callback, cfg.perturbation, _phase, _offset)
    return SolveReport(Coupling(P / P.sum()), trace, converged, k, Algorithm.BPG,
                       sinkhorn_failures=failures)


def ebpg_solve(D_X, D_Y, mu, nu, config: SolverConfig | None = None, init=None,
               callback: Callback | None = None) -> SolveReport:
    """Entropic scheme: Sinkhorn on ``exp(-grad f(pi) / eps)`` at every step."""
    cfg = config or SolverConfig(algorithm=Algorithm.EBPG)
    A, B, mu, nu = _prepare(D_X, D_Y, mu, nu)
    P = _initial(init, mu, nu)
    eps = cfg.epsilon_reg

    def log_kernel(P):
        return 2.0 * (A @ P @ B) / eps

    P, trace, converged, k, failures = _feasible_loop("EBPG", A, B, mu, nu, cfg, P, log_kernel, callback)
    return SolveReport(Coupling(P / P.sum()), trace, converged, k, Algorithm.EBPG,
                       sinkhorn_failures=failures)


def hbpg_solve(D_X, D_Y, mu, nu, config: SolverConfig | None = None, init=None,
               callback: Callback | None = None) -> SolveReport:
    """eBPG warm start for ``switch_iters`` iterations, then BPG.

    The two phases share the ``max_iters`` budget.  Records carry ``phase``
    1 or 2 and iteration numbers continue across the switch.
    """
    cfg = config or SolverConfig(algorithm=Algorithm.HBPG)
    A, B, mu_w, nu_w = _prepare(D_X, D_Y, mu, nu)
    n1 = min(cfg.switch_iters, cfg.max_iters)
    start = init
    trace: list[IterationRecord] = []
    used = 0
    failures = 0
    report = None
    if n1 > 0:
        report = ebpg_solve(A, B, mu_w, nu_w, replace(cfg, max_iters=n1), init=init, callback=callback)
        trace.extend(report.trace)
        used = report.iterations_used
        failures = report.sinkhorn_failures
        start = report.coupling
    budget = cfg.max_iters - used
    if budget > 0:
        report = bpg_solve(A, B, mu_w, nu_w, replace(cfg, max_iters=budget), init=start,
                           callback=callback, _phase=2 if n1 > 0 else 1, _offset=used)
        trace.extend(report.trace)
        used += report.iterations_used
        failures += report.sinkhorn_failures
    return SolveReport(report.final_coupling, trace, report.converged, used, Algorithm.HBPG,
                       sinkhorn_failures=failures)

"""Projections onto the row polytope, the column polytope and their intersection.

``C1 = {pi >= 0 : pi 1 = mu}`` and ``C2 = {pi >= 0 : pi^T 1 = nu}``.  Both KL
(scaling) and Euclidean (sort-threshold) projections are provided, together
with Sinkhorn and Dykstra for the intersection and an exact transportation
simplex used as the Frank-Wolfe linear minimisation oracle.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import NumericalInstabilityError, ProjectionConvergenceError

KERNEL_FLOOR = 1e-300


class Axis(str, enum.Enum):
    ROWS = "ROWS"
    COLS = "COLS"


def _axis(axis) -> Axis:
    return axis if isinstance(axis, Axis) else Axis(str(axis).upper())


def kl_scale(pi, target, axis=Axis.ROWS) -> np.ndarray:
    """KL projection onto ``C1`` (``axis=ROWS``) or ``C2`` (``axis=COLS``).

    Each row (column) is rescaled so that its sum equals the matching entry
    of ``target``.
    """
    pi = np.asarray(pi, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if _axis(axis) is Axis.ROWS:
        sums = pi.sum(axis=1)
        bad = np.flatnonzero(~(sums > 0))
        if bad.size:
            raise ZeroDivisionError(f"row {bad[0]} has non-positive sum {sums[bad[0]]!r}")
        return pi * (target / sums)[:, None]
    sums = pi.sum(axis=0)
    bad = np.flatnonzero(~(sums > 0))
    if bad.size:
        raise ZeroDivisionError(f"column {bad[0]} has non-positive sum {sums[bad[0]]!r}")
    return pi * (target / sums)[None, :]


def _project_rows(v: np.ndarray, s: np.ndarray) -> np.ndarray:
    # Row-wise Euclidean projection onto {x >= 0, sum x = s_i}, sort-threshold method.
    n, m = v.shape
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - s[:, None]
    ind = np.arange(1, m + 1)
    cond = u - css / ind > 0
    # cond is true on a prefix; its length is the support size (always >= 1)
    k = np.count_nonzero(cond, axis=1)
    theta = css[np.arange(n), k - 1] / k
    return np.maximum(v - theta[:, None], 0.0)


def simplex_project(v, s: float = 1.0) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{x >= 0 : sum(x) = s}``."""
    v = np.asarray(v, dtype=np.float64)
    if not s > 0:
        raise ValueError("simplex mass must be positive")
    return _project_rows(v[None, :], np.array([float(s)]))[0]


def euclid_project(pi, target, axis=Axis.ROWS) -> np.ndarray:
    """Euclidean projection onto ``C1`` (rows) or ``C2`` (columns)."""
    pi = np.asarray(pi, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if _axis(axis) is Axis.ROWS:
        return _project_rows(pi, target)
    return _project_rows(pi.T, target).T


@dataclass
class SinkhornResult:
    coupling: np.ndarray
    iterations: int
    marginal_error: float
    converged: bool
    scaling: np.ndarray | None = None  # column scaling (or log-potential), reusable as a warm start


def sinkhorn_project(kernel, mu, nu, tol: float = 1e-9, max_iters: int = 1000,
                     v0=None) -> SinkhornResult:
    """KL projection of a positive kernel onto the transport polytope.

    Returns ``diag(u) K diag(v)``.  Alternates row then column scalings; the
    error is the row violation (infinity norm) measured after each full
    sweep, when the columns are exact.  Non-convergence is reported via
    ``converged=False``.  ``v0`` warm-starts the column scaling.
    """
    K = np.maximum(np.asarray(kernel, dtype=np.float64), KERNEL_FLOOR)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    v = np.ones(K.shape[1]) if v0 is None else np.array(v0, dtype=np.float64)
    err = np.inf
    it = 0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for it in range(1, max_iters + 1):
            u = mu / (K @ v)
            v = nu / (K.T @ u)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise NumericalInstabilityError(
                    "Sinkhorn scaling overflowed; the kernel is too ill-conditioned "
                    "(use a larger regulariser/smaller step or the log-domain variant)",
                    solver="sinkhorn", iteration=it)
            err = np.max(np.abs(u * (K @ v) - mu))
            if err <= tol:
                break
    coupling = u[:, None] * K * v[None, :]
    if not np.all(np.isfinite(coupling)):
        raise NumericalInstabilityError("non-finite Sinkhorn coupling", solver="sinkhorn", iteration=it)
    return SinkhornResult(coupling, it, float(err), bool(err <= tol), v)


def round_to_polytope(P, mu, nu) -> np.ndarray:
    """Move a nonnegative matrix onto the transport polytope.

    Rows and then columns with excess mass are scaled down, and the
    remaining deficit is filled with a rank-one correction.  The result is
    feasible up to rounding and differs from ``P`` in l1 norm by at most
    twice the initial marginal error (Altschuler, Weed and Rigollet, 2017).
    """
    P = np.asarray(P, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.minimum(np.where(P.sum(1) > 0, mu / P.sum(1), 1.0), 1.0)
        F = P * x[:, None]
        y = np.minimum(np.where(F.sum(0) > 0, nu / F.sum(0), 1.0), 1.0)
        F = F * y[None, :]
    # both deficits are nonnegative in exact arithmetic; clip rounding noise
    err_r = np.maximum(mu - F.sum(1), 0.0)
    err_c = np.maximum(nu - F.sum(0), 0.0)
    total = err_r.sum()
    if total > 0:
        F = F + np.outer(err_r, err_c) / total
    return F


def sinkhorn_project_log(log_kernel, mu, nu, tol: float = 1e-9, max_iters: int = 1000,
                         g0=None) -> SinkhornResult:
    """Log-domain variant of :func:`sinkhorn_project`; takes ``log(kernel)``."""
    L = np.asarray(log_kernel, dtype=np.float64)
    log_mu = np.log(np.asarray(mu, dtype=np.float64))
    log_nu = np.log(np.asarray(nu, dtype=np.float64))
    mu = np.exp(log_mu)
    g = np.zeros(L.shape[1]) if g0 is None else np.array(g0, dtype=np.float64)
    err = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        f = log_mu - logsumexp(L + g[None, :], axis=1)
        g = log_nu - logsumexp(L + f[:, None], axis=0)
        rows = np.exp(logsumexp(L + f[:, None] + g[None, :], axis=1))
        err = np.max(np.abs(rows - mu))
        if not np.isfinite(err):
            raise NumericalInstabilityError("non-finite log-domain potentials",
                                            solver="sinkhorn-log", iteration=it)
        if err <= tol:
            break
    coupling = np.exp(L + f[:, None] + g[None, :])
    return SinkhornResult(coupling, it, float(err), bool(err <= tol), g)


def dykstra_project(pi, mu, nu, tol: float = 1e-8, max_iters: int = 10000) -> np.ndarray:
    """Euclidean projection onto the transport polytope by Dykstra's method.

    Raises :class:`ProjectionConvergenceError` (carrying the last iterate and
    its violation: row error or step size) if ``max_iters`` sweeps do not reach ``tol``.
    """
    x = np.asarray(pi, dtype=np.float64).copy()
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    viol = np.inf
    for _ in range(max_iters):
        x_old, p_old, q_old = x, p, q
        y = _project_rows(x + p, mu)
        p = x + p - y
        x = _project_rows((y + q).T, nu).T
        q = y + q - x
        # x can stall for a sweep while the corrections still move, so a
        # feasible x is not enough: require a fixed point of the whole state
        step = max(np.max(np.abs(x - x_old)), np.max(np.abs(p - p_old)), np.max(np.abs(q - q_old)))
        viol = max(np.max(np.abs(x.sum(axis=1) - mu)), step)
        if viol <= tol:
            return x
    raise ProjectionConvergenceError(
        f"Dykstra projection did not reach tol={tol:g} in {max_iters} sweeps "
        f"(violation {viol:.3e})", violation=float(viol), result=x)


def exact_ot(cost, mu, nu, max_pivots: int | None = None) -> np.ndarray:
    """Optimal vertex of ``min <cost, pi>`` over the transport polytope.

    Transportation simplex: north-west corner start, u-v potentials, Bland's
    rule for both the entering and the leaving cell.
    """
    C = np.asarray(cost, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    n, m = C.shape
    if (n, m) != (mu.size, nu.size):
        raise ValueError(f"cost shape {C.shape} does not match marginals ({mu.size}, {nu.size})")
    if n == 1 or m == 1:
        # the polytope is a single point
        return np.outer(mu, nu)
    flow = np.zeros((n, m))

    mass_tol = 1e-14 * max(mu.sum(), 1.0)
    basis: set[tuple[int, int]] = set()
    supply, demand = mu.copy(), nu.copy()
    i = j = 0
    while True:
        q = min(supply[i], demand[j])
        flow[i, j] = q
        basis.add((i, j))
        supply[i] -= q
        demand[j] -= q
        if i == n - 1 and j == m - 1:
            break
        if j == m - 1 or (i < n - 1 and supply[i] <= demand[j] + mass_tol):
            supply[i] = 0.0
            i += 1
        else:
            demand[j] = 0.0
            j += 1
    flow = np.maximum(flow, 0.0)

    scale = max(np.max(np.abs(C)), 1.0)
    cost_tol = 1e-12 * scale
    if max_pivots is None:
        max_pivots = 50 * n * m * (n + m)

    for _ in range(max_pivots):
        adj: list[list[int]] = [[] for _ in range(n + m)]
        for (a, b) in basis:
            adj[a].append(n + b)
            adj[n + b].append(a)
        u = np.zeros(n)
        v = np.zeros(m)
        seen = np.zeros(n + m, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            node = queue.popleft()
            for nb in adj[node]:
                if seen[nb]:
                    continue
                seen[nb] = True
                if node < n:
                    v[nb - n] = C[node, nb - n] - u[node]
                else:
                    u[nb] = C[nb, node - n] - v[node - n]
                queue.append(nb)
        reduced = C - u[:, None] - v[None, :]
        for (a, b) in basis:
            reduced[a, b] = 0.0
        candidates = np.flatnonzero(reduced.ravel() < -cost_tol)
        if candidates.size == 0:
            return flow
        ei, ej = divmod(int(candidates[0]), m)

        # tree path from row node ei to column node n+ej closes the cycle
        parent = {ei: -1}
        queue = deque([ei])
        target = n + ej
        while queue:
            node = queue.popleft()
            if node == target:
                break
            for nb in adj[node]:
                if nb not in parent:
                    parent[nb] = node
                    queue.append(nb)
        path = [target]
        while parent[path[-1]] != -1:
            path.append(parent[path[-1]])
        path.reverse()  # ei, col, row, ..., target
        cells = []
        for a, b in zip(path[:-1], path[1:]):
            cells.append((a, b - n) if a < n else (b, a - n))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min((c for c in minus if flow[c] <= theta + mass_tol), key=lambda c: c[0] * m + c[1])
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[ei, ej] += theta
        flow[leaving] = 0.0
        basis.discard(leaving)
        basis.add((ei, ej))
        np.maximum(flow, 0.0, out=flow)
    raise RuntimeError(f"transportation simplex exceeded {max_pivots} pivots")

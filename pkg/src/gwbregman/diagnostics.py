"""Feasibility, stationarity and sharpness measures for couplings."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .projections import dykstra_project
from .solvers.objective import gw_objective


@dataclass(frozen=True)
class DiagnosticsSummary:
    objective: float
    marginal_infeasibility: float
    split_gap: float
    residual: float
    entropy: float

    def to_dict(self) -> dict:
        return asdict(self)


def marginal_infeasibility(pi, mu, nu) -> float:
    """``||pi^T 1 - nu|| / m + ||pi 1 - mu|| / n`` with Euclidean norms."""
    P = np.asarray(pi, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    n, m = P.shape
    return float(np.linalg.norm(P.sum(axis=0) - nu) / m + np.linalg.norm(P.sum(axis=1) - mu) / n)


def split_gap(pi, w=None) -> float:
    """Frobenius distance between the two halves of a split iterate."""
    if w is None:
        pi, w = pi.pi, pi.w
    return float(np.linalg.norm(np.asarray(pi, dtype=np.float64) - np.asarray(w, dtype=np.float64)))


def luo_tseng_residual(D_X, D_Y, pi, mu, nu, tol: float = 1e-8, max_iters: int = 10000) -> float:
    """Projected-gradient residual ``||pi - P(pi + D_X pi D_Y)||_F``.

    ``P`` is the Euclidean projection onto the transport polytope.  The step
    uses ``D_X pi D_Y`` without the factor 2 of the true gradient; this only
    rescales the residual and leaves its zero set unchanged.
    """
    P = np.asarray(pi, dtype=np.float64)
    A = np.asarray(D_X, dtype=np.float64)
    B = np.asarray(D_Y, dtype=np.float64)
    proj = dykstra_project(P + A @ P @ B, mu, nu, tol=tol, max_iters=max_iters)
    return float(np.linalg.norm(P - proj))


def coupling_entropy(pi) -> float:
    """Shannon entropy ``-sum pi log pi`` in nats, with ``0 log 0 = 0``."""
    P = np.asarray(pi, dtype=np.float64).ravel()
    P = P[P > 0]
    return float(max(-np.sum(P * np.log(P)), 0.0))


def summarize(D_X, D_Y, pi, mu, nu, w=None, residual_tol: float = 1e-8) -> DiagnosticsSummary:
    """All diagnostics for one coupling (or for the average of a split pair)."""
    P = np.asarray(pi, dtype=np.float64)
    gap = 0.0
    if w is not None:
        W = np.asarray(w, dtype=np.float64)
        gap = split_gap(P, W)
        P = (P + W) / 2
    return DiagnosticsSummary(
        objective=gw_objective(D_X, D_Y, P),
        marginal_infeasibility=marginal_infeasibility(P, mu, nu),
        split_gap=gap,
        residual=luo_tseng_residual(D_X, D_Y, P, mu, nu, tol=residual_tol),
        entropy=coupling_entropy(P),
    )

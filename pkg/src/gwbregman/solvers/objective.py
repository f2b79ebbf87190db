"""GW objective, its gradient, the split (bilinear) objective and potential."""

from __future__ import annotations

import numpy as np

from ..core import Geometry


def _mats(D_X, D_Y, pi):
    return (np.asarray(D_X, dtype=np.float64), np.asarray(D_Y, dtype=np.float64),
            np.asarray(pi, dtype=np.float64))


def gw_objective(D_X, D_Y, pi) -> float:
    """``-Tr(D_X pi D_Y pi^T)``."""
    A, B, P = _mats(D_X, D_Y, pi)
    return -float(np.sum(((A @ P) @ B) * P))


def gw_gradient(D_X, D_Y, pi) -> np.ndarray:
    """Gradient of :func:`gw_objective`, ``-2 D_X pi D_Y`` for symmetric inputs."""
    A, B, P = _mats(D_X, D_Y, pi)
    return -2.0 * (A @ P @ B)


def bilinear_value(D_X, D_Y, pi, w) -> float:
    """``-Tr(D_X pi D_Y w^T)``; equals the GW objective when ``w == pi``."""
    A, B, P = _mats(D_X, D_Y, pi)
    return -float(np.sum((A @ P @ B) * np.asarray(w, dtype=np.float64)))


def bregman_divergence(x, y, geometry=Geometry.ENTROPY) -> float:
    """``D_h(x, y)``: generalised KL for ENTROPY, ``0.5 ||x - y||^2`` for QUADRATIC."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if Geometry(geometry) is Geometry.QUADRATIC:
        return 0.5 * float(np.sum((x - y) ** 2))
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("KL divergence needs strictly positive arguments")
    return float(np.sum(x * np.log(x / y) - x + y))


def penalty_value(D_X, D_Y, pi, w, rho: float, geometry=Geometry.ENTROPY) -> float:
    """Penalised split objective ``f(pi, w) + rho * D_h(pi, w)``.

    ``pi`` may also be a :class:`~gwbregman.core.SplitIterate`, in which case
    ``w`` is ignored and the pair is taken from it.
    """
    if hasattr(pi, "pi") and hasattr(pi, "w"):
        pi, w = pi.pi, pi.w
    return bilinear_value(D_X, D_Y, pi, w) + rho * bregman_divergence(pi, w, geometry)


def _spectral_norm(D: np.ndarray, tol: float, max_iters: int) -> float:
    if not np.any(D):
        return 0.0
    x = np.random.default_rng(0x5EED).standard_normal(D.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iters):
        y = D @ (D @ x)
        new = float(x @ y)  # Rayleigh quotient of D^2
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        x = y / nrm
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(np.sqrt(est))


def lipschitz_bound(D_X, D_Y, tol: float = 1e-10, max_iters: int = 10000) -> float:
    """``sigma_max(D_X) * sigma_max(D_Y)`` via power iteration on ``D^2``."""
    A = np.asarray(D_X, dtype=np.float64)
    B = np.asarray(D_Y, dtype=np.float64)
    a = _spectral_norm(A, tol, max_iters)
    if a == 0.0:
        return 0.0
    return a * _spectral_norm(B, tol, max_iters)

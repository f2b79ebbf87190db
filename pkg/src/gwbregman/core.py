"""Domain types shared by the solvers, diagnostics and experiment drivers.

All arrays are stored as read-only float64 numpy arrays.  The wrapper types
implement ``__array__`` so they can be passed straight into numpy code.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MASS_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-12
SPLIT_TOL = 1e-10

EPSILON_GRID = (0.1, 0.01, 0.001)


class GWError(Exception):
    """Base class for errors raised by this package."""


class DimensionMismatchError(GWError, ValueError):
    pass


class NumericalInstabilityError(GWError, ArithmeticError):
    """Raised when an iteration produces NaN/inf or is about to overflow.

    ``solver`` and ``iteration`` identify where it happened.
    """

    def __init__(self, message: str, solver: str = "", iteration: int | None = None):
        self.solver = solver
        self.iteration = iteration
        prefix = ""
        if solver:
            prefix += f"[{solver}] "
        if iteration is not None:
            prefix += f"iteration {iteration}: "
        super().__init__(prefix + message)


class ProjectionConvergenceError(GWError, RuntimeError):
    """An iterative projection hit its sweep cap before reaching tolerance."""

    def __init__(self, message: str, violation: float, result: np.ndarray | None = None):
        self.violation = violation
        self.result = result
        super().__init__(message)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


class _ArrayBacked:
    _data_attr = "entries"

    def __array__(self, dtype=None, copy=None):
        a = getattr(self, self._data_attr)
        if dtype is not None:
            return a.astype(dtype)
        return np.array(a) if copy else a

    @property
    def shape(self):
        return getattr(self, self._data_attr).shape


@dataclass(frozen=True, eq=False)
class DistanceMatrix(_ArrayBacked):
    """Symmetric, nonnegative, finite square matrix (``D_X`` or ``D_Y``).

    The input is symmetrised as ``(A + A.T) / 2`` on construction, which is a
    no-op on an already symmetric array.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"distance matrix must be non-empty and square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("distance matrix has non-finite entries")
        a = (a + a.T) / 2
        if np.any(a < 0):
            raise ValueError("distance matrix has negative entries")
        object.__setattr__(self, "entries", _frozen(a))

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class ProbabilityVector(_ArrayBacked):
    """Strictly positive weights summing to one."""

    weights: np.ndarray
    _data_attr = "weights"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError(f"probability vector must be 1-d and non-empty, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("probability weights must be finite and strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"probability weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "weights", _frozen(w))

    def __len__(self):
        return self.weights.size

    @classmethod
    def uniform(cls, n: int) -> "ProbabilityVector":
        return cls(np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class Coupling(_ArrayBacked):
    """Nonnegative ``n x m`` matrix of total mass one.

    Marginal feasibility is deliberately not enforced; see
    :func:`gwbregman.diagnostics.marginal_infeasibility`.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.float64)
        if a.ndim != 2 or 0 in a.shape:
            raise ValueError(f"coupling must be a non-empty 2-d array, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError("coupling entries must be finite and nonnegative")
        if abs(a.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"coupling mass is {a.sum()!r}, expected 1")
        object.__setattr__(self, "entries", _frozen(a))

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True, eq=False)
class SplitIterate:
    """The BAPG pair: ``pi`` has row sums ``mu``, ``w`` has column sums ``nu``."""

    pi: Coupling
    w: Coupling

    @classmethod
    def checked(cls, pi, w, mu, nu, tol: float = SPLIT_TOL) -> "SplitIterate":
        pi = pi if isinstance(pi, Coupling) else Coupling(pi)
        w = w if isinstance(w, Coupling) else Coupling(w)
        if pi.shape != w.shape:
            raise DimensionMismatchError(f"split halves differ in shape: {pi.shape} vs {w.shape}")
        row_err = np.max(np.abs(pi.entries.sum(axis=1) - np.asarray(mu)))
        col_err = np.max(np.abs(w.entries.sum(axis=0) - np.asarray(nu)))
        if row_err > tol:
            raise ValueError(f"pi violates its row constraint by {row_err:.3e}")
        if col_err > tol:
            raise ValueError(f"w violates its column constraint by {col_err:.3e}")
        return cls(pi, w)

    @property
    def average(self) -> np.ndarray:
        return (self.pi.entries + self.w.entries) / 2


@dataclass(frozen=True)
class Graph:
    """Simple undirected unweighted graph with canonical ``(min, max)`` edges."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if int(self.num_nodes) < 1:
            raise ValueError("graph needs at least one node")
        canon = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop at node {a}")
            if not (0 <= a < self.num_nodes and 0 <= b < self.num_nodes):
                raise ValueError(f"edge ({a}, {b}) out of range for {self.num_nodes} nodes")
            canon.add((min(a, b), max(a, b)))
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = 1.0
            a[e[:, 1], e[:, 0]] = 1.0
        return a


def read_edge_list(path: str | os.PathLike) -> Graph:
    """Parse an edge-list file.

    One edge per line as two whitespace-separated 0-based indices; ``#``
    starts a comment line; an optional ``n <count>`` header fixes the node
    count, otherwise it is ``1 + max index``.
    """
    edges = []
    n_header = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "n":
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: malformed header {line!r}")
                n_header = int(parts[1])
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two node indices, got {line!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer node index in {line!r}") from None
            if a < 0 or b < 0:
                raise ValueError(f"{path}:{lineno}: negative node index")
            edges.append((a, b))
    if n_header is None:
        n_header = 1 + max((max(e) for e in edges), default=0)
    return Graph(n_header, tuple(edges))


def write_edge_list(g: Graph, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n {g.num_nodes}\n")
        for a, b in g.edges:
            fh.write(f"{a} {b}\n")


class Algorithm(str, enum.Enum):
    BAPG = "BAPG"
    BPG = "BPG"
    EBPG = "EBPG"
    HBPG = "HBPG"
    FW = "FW"


class Geometry(str, enum.Enum):
    """Bregman geometry: negative entropy (KL) or half squared norm."""

    ENTROPY = "ENTROPY"
    QUADRATIC = "QUADRATIC"


@dataclass(frozen=True)
class SolverConfig:
    """Solver selection and parameters.

    Defaults follow the experimental protocol: relative-change tolerance
    1e-6 with a 2000 iteration cap, ``rho = 0.1`` for BAPG and constant step
    5 for BPG.  ``epsilon_reg`` is one point of :data:`EPSILON_GRID`.
    """

    algorithm: Algorithm = Algorithm.BAPG
    geometry: Geometry = Geometry.ENTROPY
    rho: float = 0.1
    step: float = 5.0
    epsilon_reg: float = 0.1
    inner_iters: int = 1000
    inner_tol: float = 1e-9
    rel_tol: float = 1e-6
    max_iters: int = 2000
    perturbation: float = 0.0
    switch_iters: int = 200
    seed: int = 0
    log_domain: bool = False   # log-domain Sinkhorn for small epsilon_reg
    residual_every: int = 0    # 0 disables per-iteration Luo-Tseng residual
    round_inner: bool = True   # round iterates whose inner Sinkhorn missed inner_tol

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(str(self.algorithm).upper().split(".")[-1]))
        object.__setattr__(self, "geometry", Geometry(str(self.geometry).upper().split(".")[-1]))
        for name in ("rho", "step", "epsilon_reg", "inner_tol", "rel_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("inner_iters", "max_iters"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.switch_iters < 0 or self.residual_every < 0:
            raise ValueError("switch_iters and residual_every must be nonnegative")
        if not 0 <= self.perturbation < 1:
            raise ValueError("perturbation must lie in [0, 1)")

    def replace(self, **changes) -> "SolverConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    objective: float
    marginal_infeasibility: float
    split_gap: float
    residual: Optional[float]
    rel_change: float
    elapsed_seconds: float
    potential: Optional[float] = None   # F_rho(pi, w) for BAPG
    phase: int = 1                      # 1 or 2; only hBPG uses 2


@dataclass
class SolveReport:
    """Result of a solver run.

    ``final_coupling`` is the solution handed to downstream tasks; for BAPG it
    is the averaged iterate ``(pi + w) / 2`` and the halves are kept in
    ``split``.
    """

    final_coupling: Coupling
    trace: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0
    algorithm: Algorithm = Algorithm.BAPG
    split: Optional[SplitIterate] = None
    sinkhorn_failures: int = 0

    @property
    def coupling(self) -> np.ndarray:
        return self.final_coupling.entries

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.trace])


def validate_inputs(D_X, D_Y, mu, nu) -> None:
    """Raise :class:`DimensionMismatchError` unless sizes line up."""
    nx_, ny_ = np.shape(D_X)[0], np.shape(D_Y)[0]
    if nx_ != len(np.asarray(mu)):
        raise DimensionMismatchError(f"D_X is {nx_}x{nx_} but mu has length {len(np.asarray(mu))}")
    if ny_ != len(np.asarray(nu)):
        raise DimensionMismatchError(f"D_Y is {ny_}x{ny_} but nu has length {len(np.asarray(nu))}")


def product_coupling(mu, nu) -> Coupling:
    return Coupling(np.outer(np.asarray(mu, dtype=float), np.asarray(nu, dtype=float)))


def as_distance(d) -> DistanceMatrix:
    return d if isinstance(d, DistanceMatrix) else DistanceMatrix(d)


def as_probability(p) -> ProbabilityVector:
    return p if isinstance(p, ProbabilityVector) else ProbabilityVector(p)


def uniform_pair(n: int, m: int) -> tuple[ProbabilityVector, ProbabilityVector]:
    return ProbabilityVector.uniform(n), ProbabilityVector.uniform(m)


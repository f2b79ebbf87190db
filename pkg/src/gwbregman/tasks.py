"""Experiment drivers: graph generators, noise, alignment, partition and 2D matching."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .core import DistanceMatrix, Graph, ProbabilityVector, ProjectionConvergenceError, SolverConfig
from .diagnostics import coupling_entropy, luo_tseng_residual, marginal_infeasibility
from .projections import sinkhorn_project
from .solvers import gw_objective, solve


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlignmentInstance:
    """Source/target graphs with ``ground_truth[i]`` the target node of source node ``i``."""

    source: Graph
    target: Graph
    ground_truth: np.ndarray

    def __post_init__(self):
        gt = np.asarray(self.ground_truth, dtype=np.int64)
        if gt.shape != (self.source.num_nodes,):
            raise ValueError("ground truth must cover every source node")
        if len(np.unique(gt)) != gt.size or gt.min() < 0 or gt.max() >= self.target.num_nodes:
            raise ValueError("ground truth must be an injective map into the target nodes")
        object.__setattr__(self, "ground_truth", gt)


@dataclass(frozen=True)
class PartitionInstance:
    graph: Graph
    k: int
    ground_truth_labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.ground_truth_labels, dtype=np.int64)
        if labels.shape != (self.graph.num_nodes,):
            raise ValueError("one label per node required")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise ValueError(f"labels must lie in [0, {self.k})")
        object.__setattr__(self, "ground_truth_labels", labels)


@dataclass(frozen=True)
class PointCloud2D:
    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 2:
            raise ValueError(f"expected an (n, 2) array, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", p)

    def __len__(self):
        return self.points.shape[0]


class Shape(str, enum.Enum):
    CROSS = "CROSS"
    RING = "RING"
    BLOB = "BLOB"


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def gen_barabasi_albert(n: int, m_attach: int, seed: int = 0) -> Graph:
    """Preferential attachment grown from a clique on ``m_attach + 1`` nodes.

    Each new node links to ``m_attach`` distinct existing nodes drawn with
    probability proportional to their current degree.
    """
    if not 1 <= m_attach < n:
        raise ValueError(f"need 1 <= m_attach < n, got m_attach={m_attach}, n={n}")
    rng = np.random.default_rng(seed)
    core = m_attach + 1
    edges = [(a, b) for a in range(core) for b in range(a + 1, core)]
    degree = np.zeros(n)
    degree[:core] = m_attach
    for v in range(core, n):
        p = degree[:v] / degree[:v].sum()
        targets = rng.choice(v, size=m_attach, replace=False, p=p)
        for t in targets:
            edges.append((int(t), v))
        degree[targets] += 1
        degree[v] = m_attach
    return Graph(n, tuple(edges))


def _cluster_sizes(n: int, k: int, std: float, rng: np.random.Generator) -> np.ndarray:
    raw = np.maximum(rng.normal(n / k, std, size=k), 1.0)
    raw = raw * (n / raw.sum())
    sizes = np.maximum(np.floor(raw).astype(np.int64), 1)
    # hand out (or take back) the rounding remainder by fractional part
    order = np.argsort(-(raw - np.floor(raw)), kind="stable")
    i = 0
    while sizes.sum() < n:
        sizes[order[i % k]] += 1
        i += 1
    while sizes.sum() > n:
        j = int(np.argmax(sizes))
        sizes[j] -= 1
    return sizes


def gen_gaussian_partition(n: int, k: int, p_in: float = 0.5, p_out: float = 0.02,
                           seed: int = 0, size_std: float | None = None) -> PartitionInstance:
    """Planted partition with Gaussian cluster sizes around ``n / k``.

    Sizes have standard deviation ``n / (4k)`` by default, are clipped at 1
    and rescaled to sum to ``n``.  Pairs inside a cluster are linked with
    probability ``p_in``, pairs across clusters with ``p_out``.
    """
    if not (0 <= p_out < p_in <= 1):
        raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    std = n / (4 * k) if size_std is None else size_std
    sizes = _cluster_sizes(n, k, std, rng)
    labels = np.repeat(np.arange(k), sizes)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    draws = rng.random((n, n))
    iu, ju = np.triu_indices(n, 1)
    keep = draws[iu, ju] < prob[iu, ju]
    edges = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))
    return PartitionInstance(Graph(n, edges), k, labels)


def add_noise(g: Graph, q_percent: float, seed: int = 0) -> Graph:
    """Add ``floor(q% |V|)`` nodes, then ``floor(q% |E|)`` edges between absent pairs.

    Original node indices and edges are kept, so source node ``i`` still
    corresponds to node ``i`` of the result.
    """
    if q_percent < 0:
        raise ValueError("noise level must be nonnegative")
    rng = np.random.default_rng(seed)
    n_new = math.floor(q_percent * g.num_nodes / 100)
    e_new = math.floor(q_percent * g.num_edges / 100)
    N = g.num_nodes + n_new
    existing = set(g.edges)
    absent_count = N * (N - 1) // 2 - len(existing)
    if e_new > absent_count:
        raise ValueError(f"cannot add {e_new} edges: only {absent_count} node pairs are free")
    added: list[tuple[int, int]] = []
    if N * (N - 1) // 2 <= 2_000_000:
        iu, ju = np.triu_indices(N, 1)
        free = np.array([(a, b) not in existing for a, b in zip(iu.tolist(), ju.tolist())])
        pick = rng.choice(np.flatnonzero(free), size=e_new, replace=False)
        added = [(int(iu[p]), int(ju[p])) for p in np.sort(pick)]
    else:
        chosen = set()
        while len(chosen) < e_new:
            a, b = rng.integers(0, N, size=2)
            e = (int(min(a, b)), int(max(a, b)))
            if a != b and e not in existing and e not in chosen:
                chosen.add(e)
        added = sorted(chosen)
    return Graph(N, g.edges + tuple(added))


def permute_graph(g: Graph, seed: int = 0) -> tuple[Graph, np.ndarray]:
    """Relabel nodes by a uniform random permutation; returns ``(graph, perm)``.

    ``perm[i]`` is the new label of node ``i``.
    """
    rng = np.random.default_rng(seed)
    perm = rng.permutation(g.num_nodes)
    edges = tuple((int(perm[a]), int(perm[b])) for a, b in g.edges)
    return Graph(g.num_nodes, edges), perm


def make_alignment_instance(source: Graph, q_percent: float = 0.0, seed: int = 0) -> AlignmentInstance:
    """Noisy, permuted copy of ``source`` with the composed ground truth."""
    noisy = add_noise(source, q_percent, seed=seed + 1)
    target, perm = permute_graph(noisy, seed=seed + 2)
    return AlignmentInstance(source, target, perm[: source.num_nodes])


def adjacency_distance(g: Graph) -> DistanceMatrix:
    return DistanceMatrix(g.adjacency())


def euclidean_distance_matrix(p: PointCloud2D | np.ndarray) -> DistanceMatrix:
    pts = p.points if isinstance(p, PointCloud2D) else np.asarray(p, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    return DistanceMatrix(np.sqrt(np.sum(diff * diff, axis=-1)))


# ---------------------------------------------------------------------------
# Assignments and scores
# ---------------------------------------------------------------------------

def hard_assignment(pi) -> np.ndarray:
    """Row-wise argmax; ``np.argmax`` already breaks ties toward the lowest index."""
    return np.argmax(np.asarray(pi), axis=1)


def alignment_accuracy(pred, gt) -> float:
    """Percentage of ground-truth pairs ``(i, gt[i])`` recovered by ``pred``."""
    if isinstance(gt, dict):
        keys = list(gt)
        truth = np.array([gt[i] for i in keys])
    else:
        truth = np.asarray(gt)
        keys = range(truth.size)
    pred = np.asarray(pred)
    hits = sum(int(pred[i] == t) for i, t in zip(keys, truth))
    return 100.0 * hits / len(truth)


def partition_target(k: int) -> tuple[DistanceMatrix, ProbabilityVector]:
    """``k`` isolated, self-connected super nodes with uniform mass."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return DistanceMatrix(np.eye(k)), ProbabilityVector.uniform(k)


def partition_assign(pi) -> np.ndarray:
    return hard_assignment(pi)


def _contingency(a, b):
    _, ai = np.unique(np.asarray(a), return_inverse=True)
    _, bi = np.unique(np.asarray(b), return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy_counts(counts: np.ndarray, N: int) -> float:
    p = counts[counts > 0] / N
    return float(-np.sum(p * np.log(p)))


def expected_mutual_info(row_sums: np.ndarray, col_sums: np.ndarray, N: int) -> float:
    """Expected MI of two labelings under the hypergeometric (permutation) model."""
    total = 0.0
    lg_N = gammaln(N + 1)
    for a in row_sums:
        for b in col_sums:
            lo, hi = max(1, a + b - N), min(a, b)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            log_p = (gammaln(a + 1) + gammaln(b + 1) + gammaln(N - a + 1) + gammaln(N - b + 1)
                     - lg_N - gammaln(nij + 1) - gammaln(a - nij + 1) - gammaln(b - nij + 1)
                     - gammaln(N - a - b + nij + 1))
            total += float(np.sum(nij / N * np.log(N * nij / (a * b)) * np.exp(log_p)))
    return total


def ami_score(labels_a, labels_b) -> float:
    """Adjusted mutual information with arithmetic-mean normalisation.

    Returns 0 when the normaliser ``mean(H_a, H_b) - E[MI]`` is at most 1e-15
    (for example when one labeling is constant).
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("label arrays must have the same non-zero length")
    N = a.size
    table = _contingency(a, b)
    rs, cs = table.sum(axis=1), table.sum(axis=0)
    nz = table > 0
    mi = float(np.sum(table[nz] / N * np.log(N * table[nz] / np.outer(rs, cs)[nz])))
    emi = expected_mutual_info(rs, cs, N)
    denom = 0.5 * (_entropy_counts(rs, N) + _entropy_counts(cs, N)) - emi
    if denom <= 1e-15:
        return 0.0
    return (mi - emi) / denom


# ---------------------------------------------------------------------------
# 2D toy shapes
# ---------------------------------------------------------------------------

# (start, end) of each arm; unequal lengths so the cross has no symmetry
_CROSS_ARMS = np.array([
    [[0.0, 0.0], [-1.0, 0.0]],
    [[0.0, 0.0], [2.0, 0.0]],
    [[0.0, 0.0], [0.0, 1.5]],
    [[0.0, 0.0], [0.0, -0.6]],
])


def sample_2d_shape(n: int, shape: Shape | str = Shape.CROSS, seed: int = 0,
                    width: float = 0.1) -> PointCloud2D:
    """Sample ``n`` points from a CROSS (asymmetric), RING or BLOB."""
    if n < 1:
        raise ValueError("need at least one point")
    rng = np.random.default_rng(seed)
    shape = Shape(str(shape).upper().split(".")[-1])
    if shape is Shape.CROSS:
        lengths = np.linalg.norm(_CROSS_ARMS[:, 1] - _CROSS_ARMS[:, 0], axis=1)
        arm = rng.choice(len(lengths), size=n, p=lengths / lengths.sum())
        t = rng.random(n)
        start, end = _CROSS_ARMS[arm, 0], _CROSS_ARMS[arm, 1]
        direction = (end - start) / lengths[arm, None]
        normal = np.stack([-direction[:, 1], direction[:, 0]], axis=1)
        pts = start + t[:, None] * (end - start) + normal * rng.uniform(-width, width, size=(n, 1))
    elif shape is Shape.RING:
        theta = rng.uniform(0, 2 * np.pi, n)
        r = 1.0 + rng.uniform(-width, width, n)
        pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    else:
        pts = rng.normal(size=(n, 2)) * np.array([1.0, 0.4])
    return PointCloud2D(pts)


def rotate_2d(p: PointCloud2D, theta: float) -> PointCloud2D:
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return PointCloud2D(p.points @ R.T)


def make_match2d_pair(n_source: int, n_target: int, shape: Shape | str = Shape.CROSS,
                      angle_deg: float = 30.0, seed: int = 0) -> tuple[PointCloud2D, PointCloud2D]:
    """Source cloud and an independently sampled, rotated target of the same shape.

    With equal sizes and a zero angle the two clouds coincide.
    """
    source = sample_2d_shape(n_source, shape, seed=seed)
    target_seed = seed if n_target == n_source else seed + 1
    target = rotate_2d(sample_2d_shape(n_target, shape, seed=target_seed), math.radians(angle_deg))
    return source, target


# ---------------------------------------------------------------------------
# Experiment runners
# ---------------------------------------------------------------------------

def random_coupling(mu, nu, seed: int = 0, spread: float = 1.0) -> np.ndarray:
    """Seeded strictly positive point of the transport polytope.

    Used to break the symmetry of targets with interchangeable nodes, for
    which the product coupling is a fixed point of every solver here.
    """
    rng = np.random.default_rng(seed)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    kernel = np.outer(mu, nu) * np.exp(spread * rng.standard_normal((mu.size, nu.size)))
    return sinkhorn_project(kernel, mu, nu, tol=1e-13, max_iters=10000).coupling


@dataclass
class RunResult:
    """Final metrics of one solver run on one instance."""

    objective: float
    marginal_infeasibility: float
    split_gap: float
    residual: float
    entropy: float
    iterations: int
    converged: bool
    seconds: float
    accuracy: float | None = None
    ami: float | None = None
    coupling: np.ndarray | None = None
    trace: list = field(default_factory=list)


def safe_residual(D_X, D_Y, pi, mu, nu) -> float:
    """Luo-Tseng residual, falling back to Dykstra's last iterate if it stalls."""
    P = np.asarray(pi, dtype=np.float64)
    try:
        return luo_tseng_residual(D_X, D_Y, P, mu, nu)
    except ProjectionConvergenceError as exc:
        return float(np.linalg.norm(P - exc.result))


def _run(D_X, D_Y, mu, nu, config: SolverConfig, init=None, residual: bool = True) -> RunResult:
    report = solve(D_X, D_Y, mu, nu, config, init=init)
    P = report.coupling
    gap = 0.0
    if report.split is not None:
        gap = float(np.linalg.norm(report.split.pi.entries - report.split.w.entries))
    res = safe_residual(D_X, D_Y, P, mu, nu) if residual else float("nan")
    seconds = report.trace[-1].elapsed_seconds if report.trace else 0.0
    return RunResult(
        objective=gw_objective(D_X, D_Y, P),
        marginal_infeasibility=marginal_infeasibility(P, mu, nu),
        split_gap=gap,
        residual=res,
        entropy=coupling_entropy(P),
        iterations=report.iterations_used,
        converged=report.converged,
        seconds=seconds,
        coupling=P,
        trace=report.trace,
    )


def run_alignment(instance: AlignmentInstance, config: SolverConfig, residual: bool = True) -> RunResult:
    D_X = adjacency_distance(instance.source)
    D_Y = adjacency_distance(instance.target)
    mu = ProbabilityVector.uniform(instance.source.num_nodes)
    nu = ProbabilityVector.uniform(instance.target.num_nodes)
    out = _run(D_X, D_Y, mu, nu, config, residual=residual)
    out.accuracy = alignment_accuracy(hard_assignment(out.coupling), instance.ground_truth)
    return out


def run_partition(instance: PartitionInstance, config: SolverConfig, nu=None,
                  residual: bool = True) -> RunResult:
    """Match the graph to ``k`` super nodes and score the row-argmax labels by AMI.

    The solver starts from :func:`random_coupling` seeded with
    ``config.seed``, since the product coupling is a symmetric fixed point.
    """
    D_X = adjacency_distance(instance.graph)
    D_Y, nu_default = partition_target(instance.k)
    mu = ProbabilityVector.uniform(instance.graph.num_nodes)
    nu = nu_default if nu is None else ProbabilityVector(nu)
    init = random_coupling(mu, nu, seed=config.seed)
    out = _run(D_X, D_Y, mu, nu, config, init=init, residual=residual)
    out.ami = ami_score(partition_assign(out.coupling), instance.ground_truth_labels)
    return out


def run_match2d(source: PointCloud2D, target: PointCloud2D, config: SolverConfig,
                residual: bool = True) -> RunResult:
    D_X = euclidean_distance_matrix(source)
    D_Y = euclidean_distance_matrix(target)
    mu = ProbabilityVector.uniform(len(source))
    nu = ProbabilityVector.uniform(len(target))
    return _run(D_X, D_Y, mu, nu, config, residual=residual)

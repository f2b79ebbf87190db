"""Command-line experiment runner.

Subcommands ``align``, ``partition`` and ``match2d`` solve a batch of
instances over a grid of solver settings and write

* ``trace.jsonl``: one JSON object per iteration record per run,
* ``summary.csv``: one row per (instance, config), columns :data:`SUMMARY_COLUMNS`,
* ``timing.csv``: wall-clock seconds per run, kept apart so that
  ``summary.csv`` is byte-identical across reruns,
* ``coupling.csv`` (``match2d`` only): header ``n,m`` then the dense coupling.

``diagnose`` prints the diagnostics of a stored coupling as JSON.

Exit codes: 0 success, 1 configuration / input error, 2 numerical
instability in a solver.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import enum
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    Algorithm,
    DimensionMismatchError,
    GWError,
    Geometry,
    NumericalInstabilityError,
    ProbabilityVector,
    SolverConfig,
    read_edge_list,
)
from .diagnostics import DiagnosticsSummary, coupling_entropy, marginal_infeasibility, split_gap
from .solvers import gw_objective
from . import tasks

logger = logging.getLogger("gwbregman")

SUMMARY_COLUMNS = (
    "instance", "config", "task", "algorithm", "geometry", "rho", "step", "epsilon_reg",
    "seed", "objective", "accuracy", "ami", "marginal_infeasibility", "split_gap",
    "residual", "entropy", "iterations", "converged",
)
TIMING_COLUMNS = ("instance", "config", "seconds")


class Task(str, enum.Enum):
    ALIGN = "ALIGN"
    PARTITION = "PARTITION"
    MATCH2D = "MATCH2D"
    DIAGNOSE = "DIAGNOSE"


@dataclass(frozen=True)
class ExperimentSpec:
    """One batch: a task, its instance parameters and a grid of solver configs.

    ``instances`` holds one generator seed per instance.  ``params`` carries
    either input paths or generator parameters for the task.
    """

    task: Task
    configs: tuple[SolverConfig, ...]
    instances: tuple[int, ...]
    out_dir: Path
    params: dict = field(default_factory=dict)
    jobs: int = 1
    trace: bool = True

    def __post_init__(self):
        if not self.configs:
            raise ValueError("empty solver grid")
        if not self.instances:
            raise ValueError("no instances requested")
        if self.jobs < 1:
            raise ValueError("--jobs must be at least 1")
        if self.task is Task.DIAGNOSE:
            raise ValueError("diagnose is not a batch task")


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def read_matrix(path, square: bool = False) -> np.ndarray:
    """Dense CSV of reals without header; blank and ``#`` lines are skipped."""
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = [float(x) for x in line.split(",")]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric entry in {line!r}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    a = np.array(rows)
    if square and a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"{path}: matrix is {a.shape[0]}x{a.shape[1]}, expected square")
    return a


def read_coupling(path) -> np.ndarray:
    """Dense coupling CSV; an optional first line ``n,m`` giving the shape is checked and skipped."""
    with open(path, encoding="utf-8") as fh:
        lines = [(i, ln.strip()) for i, ln in enumerate(fh, start=1)]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no data rows")
    first = [t.strip() for t in lines[0][1].split(",")]
    if len(first) == 2 and all(t.isdigit() for t in first) and len(lines) > 1:
        header = (int(first[0]), int(first[1]))
        shape = (len(lines) - 1, len(lines[1][1].split(",")))
        if header != shape:
            raise DimensionMismatchError(
                f"{path}:{lines[0][0]}: header says {header[0]}x{header[1]}, data is {shape[0]}x{shape[1]}")
        lines = lines[1:]
    rows = []
    for lineno, line in lines:
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric entry in {line!r}") from None
        if len(rows[-1]) != len(rows[0]):
            raise ValueError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}")
    return np.array(rows)


def read_vector(path) -> np.ndarray:
    """Reals separated by commas, whitespace or newlines."""
    values = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            for tok in line.replace(",", " ").split():
                try:
                    values.append(float(tok))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-numeric entry {tok!r}") from None
    return np.array(values)


def write_coupling(path, P: np.ndarray) -> None:
    n, m = P.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{n},{m}\n")
        for row in P:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, enum.Enum):
        return x.value
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


# ---------------------------------------------------------------------------
# Running a batch
# ---------------------------------------------------------------------------

@dataclass
class CellResult:
    instance: int
    config: int
    row: dict
    trace: list
    seconds: float
    coupling: np.ndarray | None


def _build_instance(task: Task, params: dict, seed: int):
    if task is Task.ALIGN:
        if params.get("source"):
            src = read_edge_list(params["source"])
            if params.get("target"):
                tgt = read_edge_list(params["target"])
                gt = read_vector(params["ground_truth"]).astype(int) if params.get("ground_truth") else None
                if gt is None:
                    return ("files", src, tgt)
                return tasks.AlignmentInstance(src, tgt, gt)
        else:
            src = tasks.gen_barabasi_albert(int(params["n"]), int(params["m_attach"]), seed=seed)
        return tasks.make_alignment_instance(src, float(params["noise"]), seed=seed)
    if task is Task.PARTITION:
        if params.get("graph"):
            g = read_edge_list(params["graph"])
            labels = read_vector(params["labels"]).astype(int)
            return tasks.PartitionInstance(g, int(params["k"]), labels)
        return tasks.gen_gaussian_partition(int(params["n"]), int(params["k"]), float(params["p_in"]),
                                            float(params["p_out"]), seed=seed)
    if params.get("source"):
        src = tasks.PointCloud2D(read_matrix(params["source"]))
        tgt = tasks.PointCloud2D(read_matrix(params["target"] or params["source"]))
        return src, tgt
    return tasks.make_match2d_pair(int(params["n_source"]), int(params["n_target"]), params["shape"],
                                   float(params["angle"]), seed=seed)


def run_cell(task: Task, params: dict, inst_idx: int, seed: int, cfg_idx: int,
             config: SolverConfig) -> CellResult:
    """Solve one (instance, config) cell; module-level so worker processes can pickle it."""
    inst = _build_instance(task, params, seed)
    t0 = time.perf_counter()
    accuracy = ami = None
    if task is Task.ALIGN:
        if isinstance(inst, tuple):
            _, src, tgt = inst
            D_X, D_Y = tasks.adjacency_distance(src), tasks.adjacency_distance(tgt)
            mu, nu = ProbabilityVector.uniform(src.num_nodes), ProbabilityVector.uniform(tgt.num_nodes)
            res = tasks._run(D_X, D_Y, mu, nu, config)
        else:
            res = tasks.run_alignment(inst, config)
            accuracy = res.accuracy
    elif task is Task.PARTITION:
        res = tasks.run_partition(inst, config)
        ami = res.ami
    else:
        res = tasks.run_match2d(inst[0], inst[1], config)
    seconds = time.perf_counter() - t0
    row = {
        "instance": inst_idx, "config": cfg_idx, "task": task.value,
        "algorithm": config.algorithm, "geometry": config.geometry, "rho": config.rho,
        "step": config.step, "epsilon_reg": config.epsilon_reg, "seed": seed,
        "objective": res.objective, "accuracy": accuracy, "ami": ami,
        "marginal_infeasibility": res.marginal_infeasibility, "split_gap": res.split_gap,
        "residual": res.residual, "entropy": res.entropy, "iterations": res.iterations,
        "converged": res.converged,
    }
    trace = [asdict(r) for r in res.trace]
    coupling = res.coupling if task is Task.MATCH2D else None
    return CellResult(inst_idx, cfg_idx, row, trace, seconds, coupling)


def run_experiment(spec: ExperimentSpec) -> int:
    """Execute every cell of ``spec`` and write the output files; returns the exit code."""
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ValueError(f"output directory {out} is not writable")
    cells = [(i, seed, c, cfg) for i, seed in enumerate(spec.instances) for c, cfg in enumerate(spec.configs)]
    if spec.jobs == 1:
        results = [run_cell(spec.task, spec.params, *cell) for cell in cells]
    else:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            futures = [pool.submit(run_cell, spec.task, spec.params, *cell) for cell in cells]
            results = [f.result() for f in futures]
    results.sort(key=lambda r: (r.instance, r.config))

    # single collector: all files are written here, in cell order
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in results:
            w.writerow([_fmt(r.row[c]) for c in SUMMARY_COLUMNS])
    with open(out / "timing.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMING_COLUMNS)
        for r in results:
            w.writerow([r.instance, r.config, repr(r.seconds)])
    if spec.trace:
        with open(out / "trace.jsonl", "w", encoding="utf-8") as fh:
            for r in results:
                for rec in r.trace:
                    fh.write(json.dumps({"instance": r.instance, "config": r.config, **rec}) + "\n")
    if spec.task is Task.MATCH2D:
        for r in results:
            name = "coupling.csv" if len(results) == 1 else f"coupling_{r.instance}_{r.config}.csv"
            write_coupling(out / name, r.coupling)
    return 0


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; 2 is reserved for numerical failures here
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


SOLVER_DEFAULTS = {
    "solver": "bapg", "geometry": "entropy", "rho": "0.1", "step": "5.0", "eps": "0.1",
    "inner_iters": "1000", "inner_tol": "1e-9", "rel_tol": "1e-6", "max_iters": "2000",
    "perturbation": "0.0", "switch_iters": "200", "seed": "0", "instances": "1", "jobs": "1",
    "out": "gw-out",
}
TASK_DEFAULTS = {
    "align": {"n": "50", "m_attach": "2", "noise": "0"},
    "partition": {"n": "60", "k": "3", "p_in": "0.5", "p_out": "0.02"},
    "match2d": {"shape": "CROSS", "n_source": "30", "n_target": "40", "angle": "30"},
}


def _grid(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"bad numeric list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gwbregman", description="Gromov-Wasserstein experiments with Bregman-type solvers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI file with [solver] and per-task sections")
        p.add_argument("--solver", choices=[a.value.lower() for a in Algorithm], default=None)
        p.add_argument("--geometry", choices=[g.value.lower() for g in Geometry], default=None)
        p.add_argument("--rho", help="BAPG step parameter; comma-separated list for a grid")
        p.add_argument("--step", help="BPG step size; comma-separated list for a grid")
        p.add_argument("--eps", help="eBPG regularisation; comma-separated list for a grid")
        p.add_argument("--inner-iters", type=int)
        p.add_argument("--inner-tol", type=float)
        p.add_argument("--rel-tol", type=float, help="outer stopping tolerance (default 1e-6)")
        p.add_argument("--max-iters", type=int, help="outer iteration cap (default 2000)")
        p.add_argument("--perturbation", type=float)
        p.add_argument("--switch-iters", type=int, help="hBPG eBPG-phase budget")
        p.add_argument("--log-domain", action="store_true", default=None)
        p.add_argument("--no-round", action="store_true", default=None,
                       help="keep BPG/eBPG iterates whose inner Sinkhorn missed inner_tol unrounded")
        p.add_argument("--seed", type=int, help="seed of the first instance")
        p.add_argument("--instances", type=int, help="number of generated instances")
        p.add_argument("--jobs", type=int, help="worker processes (default 1)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--no-trace", action="store_true", default=None, help="skip trace.jsonl")

    p = sub.add_parser("align", help="graph alignment")
    common(p)
    p.add_argument("--source", help="source edge list (default: generated BA graph)")
    p.add_argument("--target", help="target edge list (default: noisy permuted source)")
    p.add_argument("--ground-truth", help="target index per source node, one per line")
    p.add_argument("--n", type=int, help="BA graph size")
    p.add_argument("--m-attach", type=int)
    p.add_argument("--noise", type=float, help="noise level q in percent")

    p = sub.add_parser("partition", help="graph partition against k super nodes")
    common(p)
    p.add_argument("--graph", help="edge list (default: generated Gaussian partition)")
    p.add_argument("--labels", help="ground-truth label per node, one per line")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--p-in", type=float)
    p.add_argument("--p-out", type=float)

    p = sub.add_parser("match2d", help="2D shape matching")
    common(p)
    p.add_argument("--source", help="CSV of x,y points (default: sampled shape)")
    p.add_argument("--target", help="CSV of x,y points (default: rotated resample)")
    p.add_argument("--shape", type=str.upper, choices=[s.value for s in tasks.Shape])
    p.add_argument("--n-source", type=int)
    p.add_argument("--n-target", type=int)
    p.add_argument("--angle", type=float, help="target rotation in degrees")

    p = sub.add_parser("diagnose", help="diagnostics of a stored coupling, printed as JSON")
    p.add_argument("--coupling", required=True)
    p.add_argument("--dx", required=True, help="source distance matrix CSV")
    p.add_argument("--dy", required=True, help="target distance matrix CSV")
    p.add_argument("--mu", help="source weights (default uniform)")
    p.add_argument("--nu", help="target weights (default uniform)")
    p.add_argument("--w", help="second half of a split iterate; diagnostics use the average")
    return parser


_TASK_KEYS = {
    "align": ("source", "target", "ground_truth", "n", "m_attach", "noise"),
    "partition": ("graph", "labels", "n", "k", "p_in", "p_out"),
    "match2d": ("source", "target", "shape", "n_source", "n_target", "angle"),
}


def _merged(args) -> dict:
    """Built-in defaults, then the INI file, then explicit flags."""
    values = dict(SOLVER_DEFAULTS)
    values.update(TASK_DEFAULTS[args.command])
    if args.config:
        ini = configparser.ConfigParser()
        if not ini.read(args.config, encoding="utf-8"):
            raise ValueError(f"cannot read config file {args.config}")
        allowed = set(SOLVER_DEFAULTS) | set(_TASK_KEYS[args.command]) | {"log_domain", "no_round", "no_trace"}
        for section in ("solver", args.command):
            if ini.has_section(section):
                for key, val in ini.items(section):
                    key = key.replace("-", "_")
                    if key not in allowed:
                        raise ValueError(f"{args.config}: unknown key {key!r} in [{section}]")
                    values[key] = val
    for key, val in vars(args).items():
        if val is not None and key not in ("command", "config", "verbose"):
            values[key] = val
    return values


def _truthy(v) -> bool:
    return v is True or str(v).strip().lower() in ("1", "true", "yes", "on")


def spec_from_args(args) -> ExperimentSpec:
    v = _merged(args)
    base = dict(
        algorithm=str(v["solver"]).upper(),
        geometry=str(v["geometry"]).upper(),
        inner_iters=int(v["inner_iters"]),
        inner_tol=float(v["inner_tol"]),
        rel_tol=float(v["rel_tol"]),
        max_iters=int(v["max_iters"]),
        perturbation=float(v["perturbation"]),
        switch_iters=int(v["switch_iters"]),
        seed=int(v["seed"]),
        log_domain=_truthy(v.get("log_domain", False)),
        round_inner=not _truthy(v.get("no_round", False)),
    )
    configs = tuple(
        SolverConfig(rho=r, step=s, epsilon_reg=e, **base)
        for r, s, e in itertools.product(_grid(v["rho"]), _grid(v["step"]), _grid(v["eps"]))
    )
    first = int(v["seed"])
    instances = tuple(range(first, first + int(v["instances"])))
    params = {k: v.get(k) for k in _TASK_KEYS[args.command]}
    if args.command == "match2d" and params["target"] and not params["source"]:
        raise ValueError("--target needs --source")
    if args.command == "align" and params["target"] and not params["source"]:
        raise ValueError("--target needs --source")
    if args.command == "partition" and params["graph"] and not params["labels"]:
        raise ValueError("--graph needs --labels")
    return ExperimentSpec(
        task=Task(args.command.upper()),
        configs=configs,
        instances=instances,
        out_dir=Path(v["out"]),
        params=params,
        jobs=int(v["jobs"]),
        trace=not _truthy(v.get("no_trace", False)),
    )


def diagnose(args) -> DiagnosticsSummary:
    P = read_coupling(args.coupling)
    D_X = read_matrix(args.dx, square=True)
    D_Y = read_matrix(args.dy, square=True)
    n, m = P.shape
    if D_X.shape[0] != n or D_Y.shape[0] != m:
        raise DimensionMismatchError(
            f"coupling is {n}x{m} but distance matrices are {D_X.shape[0]}x{D_X.shape[0]} "
            f"and {D_Y.shape[0]}x{D_Y.shape[0]}")
    mu = read_vector(args.mu) if args.mu else np.full(n, 1.0 / n)
    nu = read_vector(args.nu) if args.nu else np.full(m, 1.0 / m)
    if mu.size != n or nu.size != m:
        raise DimensionMismatchError(f"weights have lengths {mu.size}, {nu.size}; expected {n}, {m}")
    gap = 0.0
    if args.w:
        W = read_coupling(args.w)
        if W.shape != P.shape:
            raise DimensionMismatchError(f"w is {W.shape[0]}x{W.shape[1]}, expected {n}x{m}")
        gap = split_gap(P, W)
        P = (P + W) / 2
    return DiagnosticsSummary(
        objective=gw_objective(D_X, D_Y, P),
        marginal_infeasibility=marginal_infeasibility(P, mu, nu),
        split_gap=gap,
        residual=tasks.safe_residual(D_X, D_Y, P, mu, nu),
        entropy=coupling_entropy(P),
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "diagnose":
            print(json.dumps(diagnose(args).to_dict(), indent=2))
            return 0
        return run_experiment(spec_from_args(args))
    except (NumericalInstabilityError, ZeroDivisionError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except (GWError, ValueError, OSError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

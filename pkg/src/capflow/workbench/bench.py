"""Wall-clock benchmarking: full-order solver vs surrogate inference, and
the compiled-vs-numpy kernel comparison.

Protocol: one warm-up run, then ``trials`` timed repetitions; the report
carries the median and the min/max spread. Solver timings exclude file
I/O (graphs are in memory when timed).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from ..graph import BoundaryConditions, VascularGraph
from ..linear import solve_linear
from ..nonlinear import solve_nonlinear
from ..surrogate.model import Gnn
from ..nn import kernels


def _timed(fn: Callable, warmup: int, trials: int) -> Dict[str, float]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return {"median_s": float(np.median(times)),
            "min_s": float(np.min(times)), "max_s": float(np.max(times))}


@dataclass
class BenchRow:
    graph_id: str
    nodes: int
    edges: int
    rheology: str
    solver: Dict[str, float]
    surrogate: Dict[str, float]
    speedup: float


def bench(pairs: Sequence[Tuple[str, VascularGraph, BoundaryConditions]],
          gnn: Gnn, rheology: str, trials: int = 5,
          warmup: int = 1) -> List[BenchRow]:
    """Median solver and surrogate wall times per graph, plus speedup."""
    if rheology not in ("linear", "nonlinear"):
        raise ValueError(f"unknown rheology {rheology!r}")
    rows = []
    for graph_id, graph, bc in pairs:
        if rheology == "linear":
            solver = _timed(lambda: solve_linear(graph, bc), warmup, trials)
        else:
            solver = _timed(lambda: solve_nonlinear(graph, bc), warmup, trials)
        surrogate = _timed(lambda: gnn.predict(graph, bc), warmup, trials)
        rows.append(BenchRow(
            graph_id=graph_id, nodes=graph.n, edges=graph.m,
            rheology=rheology, solver=solver, surrogate=surrogate,
            speedup=solver["median_s"] / surrogate["median_s"]))
    return rows


def save_bench(rows: List[BenchRow], directory, stem: str = "bench") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{stem}.json").write_text(
        json.dumps([asdict(r) for r in rows], indent=1))
    with open(directory / f"{stem}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["graph", "nodes", "edges", "rheology",
                         "solver_median_s", "surrogate_median_s", "speedup"])
        for r in rows:
            writer.writerow([r.graph_id, r.nodes, r.edges, r.rheology,
                             r.solver["median_s"], r.surrogate["median_s"],
                             r.speedup])


def bench_kernels(edge_count: int = 30000, node_count: int = 10000,
                  latent: int = 16, trials: int = 7) -> List[dict]:
    """Compare the active kernel backend against the numpy reference on
    hot-loop-shaped inputs."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal((edge_count, latent))
    gy = rng.standard_normal((edge_count, latent))
    e = rng.standard_normal((edge_count, latent))
    v = rng.standard_normal((node_count, latent))
    src = rng.integers(0, node_count, edge_count)
    tgt = rng.integers(0, node_count, edge_count)
    reference = kernels.numpy_backend()

    cases = [
        ("gelu", lambda impl: impl["gelu"](x)),
        ("gelu_grad", lambda impl: impl["gelu_grad"](x, gy)),
        ("scatter_add", lambda impl: impl["scatter_add"](node_count, tgt, x)),
        ("gather_concat", lambda impl: impl["gather_concat"](e, v, src, tgt)),
    ]
    active = {"gelu": kernels.gelu, "gelu_grad": kernels.gelu_grad,
              "scatter_add": kernels.scatter_add,
              "gather_concat": kernels.gather_concat}
    rows = []
    for name, runner in cases:
        ref = _timed(lambda: runner(reference), 1, trials)
        act = _timed(lambda: runner(active), 1, trials)
        rows.append({
            "kernel": name,
            "backend": kernels.BACKEND,
            "numpy_median_s": ref["median_s"],
            "active_median_s": act["median_s"],
            "speedup_vs_numpy": ref["median_s"] / act["median_s"],
        })
    return rows


def save_kernel_bench(rows: List[dict], directory,
                      stem: str = "bench_kernels") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{stem}.json").write_text(json.dumps(rows, indent=1))
    with open(directory / f"{stem}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kernel", "backend", "numpy_median_s",
                         "active_median_s", "speedup_vs_numpy"])
        for r in rows:
            writer.writerow([r["kernel"], r["backend"], r["numpy_median_s"],
                             r["active_median_s"], r["speedup_vs_numpy"]])

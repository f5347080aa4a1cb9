"""Evaluation: relative errors against the full-order solutions, physics
residual summaries, timing comparison, and the generalization sweep."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..graph import BoundaryConditions, VascularGraph
from ..linear import solve_linear
from ..netgen import GeneratorConfig, generate_network
from ..nonlinear import solve_nonlinear
from ..solution import FlowSolution
from ..surrogate.losses import (GraphSystem, constitutive_loss, mass_loss,
                                relative_error)
from ..surrogate.model import Gnn
from ..surrogate.transform import velocity_transform
from .reference import reference_error
from .training import VARIANT_RHEOLOGY, variant_weights

NORMS = ("L1", "L2")


@dataclass
class EvalReport:
    """Per-graph and aggregate evaluation results for one checkpoint."""

    variant: int
    split: str
    per_graph: List[dict] = field(default_factory=list)
    mean_errors: Dict[str, Dict[str, float]] = field(default_factory=dict)
    physics_residuals: Dict[str, float] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    reference: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, directory, stem: str = "eval_report") -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{stem}.json").write_text(
            json.dumps(self.to_dict(), indent=1))
        with open(directory / f"{stem}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            quantities = sorted(self.mean_errors)
            header = ["graph"]
            for q in quantities:
                header += [f"{q}_L1", f"{q}_L2"]
            writer.writerow(header)
            for row in self.per_graph:
                out = [row["id"]]
                for q in quantities:
                    out += [row["errors"][q]["L1"], row["errors"][q]["L2"]]
                writer.writerow(out)


def _physics_residuals(pred: Dict[str, np.ndarray], graph: VascularGraph,
                       bc: BoundaryConditions, gnn: Gnn) -> Dict[str, float]:
    """Evaluate the physics loss terms at a prediction (constant tensors)."""
    from ..nn import tensor as T
    weights = variant_weights(gnn.config.variant)
    system = GraphSystem.for_graph(graph, bc)
    tensors = {
        "pressure_norm": T.Tensor(
            (pred["pressure"] / gnn.config.pressure_scale).reshape(-1, 1)),
        "velocity": T.Tensor(pred["velocity"].reshape(-1, 1)),
    }
    nonlinear = gnn.config.variant == 4
    if nonlinear:
        tensors["hematocrit"] = T.Tensor(pred["hematocrit"].reshape(-1, 1))
    out = {"constitutive": float(constitutive_loss(
        tensors, system, weights, gnn.config.k_v, nonlinear=nonlinear).data)}
    out["mass"] = float(mass_loss(tensors, system, weights,
                                  gnn.config.k_v).data)
    if nonlinear:
        out["mass_hematocrit"] = float(mass_loss(
            tensors, system, weights, gnn.config.k_v,
            hematocrit_weighted=True).data)
    return out


def _solution_fields(solution: FlowSolution, graph: VascularGraph,
                     k_v: float) -> Dict[str, np.ndarray]:
    fields = {
        "pressure": solution.pressures,
        "velocity": velocity_transform(solution.flows, graph.diameters, k_v),
    }
    if solution.hematocrits is not None:
        fields["hematocrit"] = solution.hematocrits
    return fields


def evaluate_graphs(gnn: Gnn, triples, *, split: str = "test",
                    predict_fn: Optional[Callable] = None,
                    time_solver: bool = True) -> EvalReport:
    """Evaluate a checkpoint on (id, graph, bc, solution) tuples.

    ``predict_fn(graph, bc) -> dict`` overrides the model (test hook).
    Evaluation is side-effect free; the FOM re-solve used for the timing
    column works on copies of the already-stored solutions' graphs.
    """
    predict = predict_fn or gnn.predict
    rheology = VARIANT_RHEOLOGY[gnn.config.variant]
    report = EvalReport(variant=gnn.config.variant, split=split)
    quantities = list(gnn.config.outputs)
    solver_times, predict_times = [], []

    for entry_id, graph, bc, solution in triples:
        truth = _solution_fields(solution, graph, gnn.config.k_v)
        t0 = time.perf_counter()
        pred = predict(graph, bc)
        predict_times.append(time.perf_counter() - t0)
        errors = {}
        for q in quantities:
            errors[q] = {norm: relative_error(pred[q], truth[q], norm)
                         for norm in NORMS}
        row = {"id": entry_id, "errors": errors}
        if gnn.config.variant >= 3:
            row["physics"] = _physics_residuals(pred, graph, bc, gnn)
        if time_solver:
            t0 = time.perf_counter()
            if rheology == "linear":
                solve_linear(graph, bc)
            else:
                solve_nonlinear(graph, bc)
            solver_times.append(time.perf_counter() - t0)
        report.per_graph.append(row)

    for q in quantities:
        report.mean_errors[q] = {
            norm: float(np.mean([r["errors"][q][norm]
                                 for r in report.per_graph]))
            for norm in NORMS}
        report.reference[q] = {
            norm: reference_error(gnn.config.variant, q, split, norm)
            for norm in NORMS}
    if gnn.config.variant >= 3 and report.per_graph:
        keys = report.per_graph[0]["physics"].keys()
        report.physics_residuals = {
            k: float(np.mean([r["physics"][k] for r in report.per_graph]))
            for k in keys}
    report.timings = {
        "surrogate_mean_s": float(np.mean(predict_times)),
        "solver_mean_s": float(np.mean(solver_times)) if solver_times else 0.0,
    }
    return report


def evaluate(manifest, split: str, gnn: Gnn,
             predict_fn: Optional[Callable] = None,
             time_solver: bool = True) -> EvalReport:
    """Evaluate a checkpoint on one split of a dataset manifest."""
    rheology = VARIANT_RHEOLOGY[gnn.config.variant]
    triples = []
    for entry in manifest.split(split):
        graph, bc, solution = manifest.load(entry, rheology)
        triples.append((entry.id, graph, bc, solution))
    return evaluate_graphs(gnn, triples, split=split, predict_fn=predict_fn,
                           time_solver=time_solver)


@dataclass
class StudyRow:
    inlet_count: int
    graphs: int
    errors: Dict[str, Dict[str, float]]
    physics_residuals: Dict[str, float]
    in_distribution: bool


def generalization_study(gnn: Gnn, base_config: GeneratorConfig,
                         inlet_counts: Sequence[int],
                         graphs_per_count: int = 3,
                         seed: int = 1234,
                         manifest=None) -> List[StudyRow]:
    """Error-vs-complexity sweep on freshly generated networks.

    Counts inside the generator's configured inlet range are flagged as
    in-distribution. When a dataset ``manifest`` is supplied its test split
    is prepended as the reference in-distribution row, reproducing
    ``evaluate`` exactly. Results export to CSV via ``save_study``.
    """
    from ..netgen import expected_point_count
    rheology = VARIANT_RHEOLOGY[gnn.config.variant]
    lo, hi = base_config.inlet_count_range
    rows = []
    if manifest is not None:
        report = evaluate(manifest, "test", gnn, time_solver=False)
        counts = []
        for entry in manifest.split("test"):
            from ..fileio import read_graph
            _, bc = read_graph(manifest.root / entry.graph)
            counts.append(len(bc.inlets))
        rows.append(StudyRow(
            inlet_count=int(round(float(np.mean(counts)))),
            graphs=len(counts), errors=report.mean_errors,
            physics_residuals=report.physics_residuals,
            in_distribution=True))
    for count in inlet_counts:
        scale = max(count / max((lo + hi) / 2.0, 1), 0.35)
        config = replace(base_config.scaled(scale),
                         inlet_count_range=(count, count))
        points = expected_point_count(config)
        if points < 9:   # tessellation needs a minimal cloud
            config = config.scaled(9.0 / points)
        triples = []
        for j in range(graphs_per_count):
            cfg = replace(config, seed=int(
                np.random.SeedSequence([seed, count, j]).generate_state(1)[0]))
            graph, bc = generate_network(cfg)
            solution = solve_linear(graph, bc) if rheology == "linear" \
                else solve_nonlinear(graph, bc)
            triples.append((f"inlets{count}_{j}", graph, bc, solution))
        report = evaluate_graphs(gnn, triples, split="study",
                                 time_solver=False)
        rows.append(StudyRow(
            inlet_count=int(count), graphs=graphs_per_count,
            errors=report.mean_errors,
            physics_residuals=report.physics_residuals,
            in_distribution=bool(lo <= count <= hi)))
    return rows


def save_study(rows: List[StudyRow], directory, stem: str = "study") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{stem}.json").write_text(
        json.dumps([asdict(r) for r in rows], indent=1))
    quantities = sorted(rows[0].errors) if rows else []
    with open(directory / f"{stem}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["inlet_count", "graphs", "in_distribution"]
        for q in quantities:
            header += [f"{q}_L1", f"{q}_L2"]
        writer.writerow(header)
        for row in rows:
            out = [row.inlet_count, row.graphs, int(row.in_distribution)]
            for q in quantities:
                out += [row.errors[q]["L1"], row.errors[q]["L2"]]
            writer.writerow(out)

"""Graph and solution file formats.

Both formats are JSON documents. Floats are serialized with Python's
round-trip ``repr`` so read(write(x)) is bit-exact. The graph schema
(``format_version`` 1):

    {
      "format_version": 1,
      "nodes": [[x, y, z], ...],                      # um
      "edges": [{"source": i, "target": j,
                 "diameter_um": d, "length_um": l}, ...],
      "boundary": {
        "inlets":  [{"node": i, "pressure_mmHg": p}, ...],
        "outlets": [{"node": i, "pressure_mmHg": p}, ...],
        "inlet_hematocrit": h
      }
    }

Node and edge indices are 0-based. Boundary pressures may be ``null`` for
skeleton files (detected boundaries without prescribed values).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .errors import SchemaError
from .graph import BoundaryConditions, VascularGraph
from .solution import FlowSolution

PathLike = Union[str, Path]

GRAPH_FORMAT_VERSION = 1
SOLUTION_FORMAT_VERSION = 1


def _load_json(path: PathLike) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return doc


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise SchemaError(f"{where}: missing required field '{key}'")
    return doc[key]


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {type(value).__name__}")
    return float(value)


def _as_index(value, n: int, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where}: expected an integer node index")
    if not (0 <= value < n):
        raise SchemaError(f"{where}: node index {value} out of range [0, {n})")
    return value


def write_graph(graph: VascularGraph, bc: BoundaryConditions, path: PathLike) -> None:
    """Serialize a graph + boundary conditions to a JSON graph file."""
    def pressures(nodes, values):
        if values is None:
            return [{"node": int(i), "pressure_mmHg": None} for i in nodes]
        return [{"node": int(i), "pressure_mmHg": float(p)}
                for i, p in zip(nodes, values)]

    doc = {
        "format_version": GRAPH_FORMAT_VERSION,
        "nodes": [[float(x) for x in row] for row in graph.coordinates],
        "edges": [
            {"source": int(s), "target": int(t),
             "diameter_um": float(d), "length_um": float(l)}
            for (s, t), d, l in zip(graph.edges, graph.diameters, graph.lengths)
        ],
        "boundary": {
            "inlets": pressures(bc.inlets, bc.inlet_pressures),
            "outlets": pressures(bc.outlets, bc.outlet_pressures),
            "inlet_hematocrit": float(bc.inlet_hematocrit),
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def read_graph(path: PathLike) -> Tuple[VascularGraph, BoundaryConditions]:
    """Parse a graph file; raises ``SchemaError`` with field diagnostics."""
    doc = _load_json(path)
    version = _require(doc, "format_version", str(path))
    if version != GRAPH_FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported format_version {version!r}")

    nodes = _require(doc, "nodes", str(path))
    if not isinstance(nodes, list) or not nodes:
        raise SchemaError(f"{path}: 'nodes' must be a nonempty array")
    coords = []
    for i, row in enumerate(nodes):
        if not isinstance(row, list) or len(row) != 3:
            raise SchemaError(f"{path}: nodes[{i}] must be [x, y, z]")
        coords.append([_as_float(v, f"{path}: nodes[{i}][{k}]")
                       for k, v in enumerate(row)])
    n = len(coords)

    raw_edges = _require(doc, "edges", str(path))
    if not isinstance(raw_edges, list) or not raw_edges:
        raise SchemaError(f"{path}: 'edges' must be a nonempty array")
    edges, diam, length = [], [], []
    for i, e in enumerate(raw_edges):
        where = f"{path}: edges[{i}]"
        if not isinstance(e, dict):
            raise SchemaError(f"{where}: expected an object")
        s = _as_index(_require(e, "source", where), n, f"{where}.source")
        t = _as_index(_require(e, "target", where), n, f"{where}.target")
        d = _as_float(_require(e, "diameter_um", where), f"{where}.diameter_um")
        l = _as_float(_require(e, "length_um", where), f"{where}.length_um")
        if d <= 0 or l <= 0:
            raise SchemaError(f"{where}: diameter and length must be positive")
        edges.append((s, t))
        diam.append(d)
        length.append(l)

    boundary = _require(doc, "boundary", str(path))
    if not isinstance(boundary, dict):
        raise SchemaError(f"{path}: 'boundary' must be an object")

    def side(key: str):
        entries = _require(boundary, key, f"{path}: boundary")
        if not isinstance(entries, list) or not entries:
            raise SchemaError(f"{path}: boundary.{key} must be a nonempty array")
        idx, pres = [], []
        for i, item in enumerate(entries):
            where = f"{path}: boundary.{key}[{i}]"
            if not isinstance(item, dict):
                raise SchemaError(f"{where}: expected an object")
            idx.append(_as_index(_require(item, "node", where), n, f"{where}.node"))
            p = _require(item, "pressure_mmHg", where)
            pres.append(None if p is None else _as_float(p, f"{where}.pressure_mmHg"))
        if any(p is None for p in pres):
            if not all(p is None for p in pres):
                raise SchemaError(f"{path}: boundary.{key} mixes set and unset pressures")
            return np.array(idx, dtype=np.int64), None
        return np.array(idx, dtype=np.int64), np.array(pres)

    inlets, p_in = side("inlets")
    outlets, p_out = side("outlets")
    h_in = _as_float(_require(boundary, "inlet_hematocrit", f"{path}: boundary"),
                     f"{path}: boundary.inlet_hematocrit")
    if not (0.0 < h_in < 1.0):
        raise SchemaError(f"{path}: boundary.inlet_hematocrit must lie in (0, 1)")

    try:
        graph = VascularGraph(coords, edges, diam, length, require_connected=False)
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    bc = BoundaryConditions(inlets=inlets, outlets=outlets,
                            inlet_pressures=p_in, outlet_pressures=p_out,
                            inlet_hematocrit=h_in)
    try:
        bc.validate(graph, require_pressures=False)
    except Exception as exc:
        raise SchemaError(f"{path}: boundary: {exc}") from exc
    return graph, bc


def write_solution(solution: FlowSolution, path: PathLike, *,
                   source: str = "fom", extra: Optional[dict] = None) -> None:
    """Serialize a flow solution. ``source`` tags FOM vs surrogate output."""
    doc = {
        "format_version": SOLUTION_FORMAT_VERSION,
        "source": source,
        "pressures": solution.pressures.tolist(),
        "flows": solution.flows.tolist(),
        "velocities": solution.velocities.tolist(),
        "residuals": dict(solution.residuals),
        "iterations": int(solution.iterations),
        "converged": bool(solution.converged),
    }
    if solution.hematocrits is not None:
        doc["hematocrits"] = solution.hematocrits.tolist()
        doc["node_potentials"] = solution.node_potentials.tolist()
        doc["clamp_count"] = int(solution.clamp_count)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1))


def read_solution(path: PathLike) -> FlowSolution:
    doc = _load_json(path)
    if doc.get("format_version") != SOLUTION_FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported solution format_version")
    for key in ("pressures", "flows", "velocities"):
        if key not in doc:
            raise SchemaError(f"{path}: missing required field '{key}'")
    hem = doc.get("hematocrits")
    pot = doc.get("node_potentials")
    return FlowSolution(
        pressures=np.array(doc["pressures"], dtype=np.float64),
        flows=np.array(doc["flows"], dtype=np.float64),
        velocities=np.array(doc["velocities"], dtype=np.float64),
        hematocrits=None if hem is None else np.array(hem, dtype=np.float64),
        node_potentials=None if pot is None else np.array(pot, dtype=np.float64),
        residuals=dict(doc.get("residuals", {})),
        iterations=int(doc.get("iterations", 1)),
        converged=bool(doc.get("converged", True)),
        clamp_count=int(doc.get("clamp_count", 0)),
    )

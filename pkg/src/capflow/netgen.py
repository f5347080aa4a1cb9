"""Synthetic capillary network synthesis.

Pipeline: (1) seed a layered point cloud in the unit cube and take the
interior edges of its 3-D Voronoi tessellation as candidate centerlines;
(2) project near-plane vertices onto the top/bottom faces as terminal
boundary stubs; (3) prune infeasible branches (dead ends, over-long
segments, edges off every inlet-outlet shortest path at crowded nodes)
and break residual trifurcations by auxiliary-node insertion; (4) assign
diameters downstream of a provisional flow solve using a fourth-power
branching rule; (5) rescale the domain to a physiological
surface-to-volume ratio.

Generation is a pure function of its configuration: every random draw
comes from a generator seeded with (seed, attempt).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.spatial import QhullError, Voronoi

from .errors import DegenerateTessellation, GenerationFailed, SchemaError
from .graph import BoundaryConditions, VascularGraph
from .linear import solve_linear

UNIT_BOX = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic network generator.

    ``layer_densities`` are points per unit volume in the three horizontal
    layers of the unit cube (each layer has volume 1/3). ``target_sv`` is
    the surface-to-volume ratio in 1/m. Pressure ranges are uniform
    sampling bounds in mmHg; the inlet range must sit strictly above the
    outlet range.
    """

    seed: int = 0
    layer_densities: Tuple[float, float, float] = (14.0, 21.0, 14.0)
    inlet_count_range: Tuple[int, int] = (10, 15)
    outlet_ratio_range: Tuple[float, float] = (1.8, 2.2)
    diameter_bounds: Tuple[float, float] = (4.0, 12.0)
    target_sv: float = 7000.0
    inlet_pressure_range: Tuple[float, float] = (30.0, 35.0)
    outlet_pressure_range: Tuple[float, float] = (10.0, 15.0)
    inlet_hematocrit: float = 0.45
    length_filter_factor: float = 3.0
    plane_proximity: float = 0.18
    min_edge_length: Optional[float] = None   # None: 0.3 x median candidate
    max_attempts: int = 10

    def __post_init__(self):
        if len(self.layer_densities) != 3 or min(self.layer_densities) <= 0:
            raise ValueError("need 3 positive layer densities")
        lo, hi = self.diameter_bounds
        if not (0 < lo < hi):
            raise ValueError("diameter bounds must satisfy 0 < min < max")
        if self.inlet_pressure_range[0] <= self.outlet_pressure_range[1]:
            raise ValueError("inlet pressures must exceed outlet pressures")
        if self.inlet_count_range[0] < 1 or \
           self.inlet_count_range[0] > self.inlet_count_range[1]:
            raise ValueError("bad inlet count range")
        if not (0.0 < self.inlet_hematocrit < 1.0):
            raise ValueError("inlet hematocrit must lie in (0, 1)")

    def scaled(self, factor: float) -> "GeneratorConfig":
        """Copy with point densities scaled by ``factor`` (size control)."""
        return replace(self, layer_densities=tuple(
            d * factor for d in self.layer_densities))

    @classmethod
    def paper_scale(cls, **overrides) -> "GeneratorConfig":
        """Preset matching the published study: ~300-node/400-edge graphs
        with 25-40 inlets at the top surface."""
        defaults = dict(layer_densities=(38.0, 57.0, 38.0),
                        inlet_count_range=(25, 40))
        defaults.update(overrides)
        return cls(**defaults)


def config_from_file(path) -> GeneratorConfig:
    """Load a GeneratorConfig from a JSON document (unknown keys rejected)."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    fields = GeneratorConfig.__dataclass_fields__
    unknown = set(doc) - set(fields)
    if unknown:
        raise SchemaError(f"{path}: unknown config keys {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return GeneratorConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Step 1-2: tessellation, filtering, stub projection
# ---------------------------------------------------------------------------

def _mirror_points(points: np.ndarray, box) -> np.ndarray:
    """Reflect the cloud across all six box faces so Voronoi cells of the
    interior points are bounded."""
    (x0, y0, z0), (x1, y1, z1) = box
    lo = np.array([x0, y0, z0])
    hi = np.array([x1, y1, z1])
    out = [points]
    for axis in range(3):
        for plane in (lo[axis], hi[axis]):
            m = points.copy()
            m[:, axis] = 2.0 * plane - m[:, axis]
            out.append(m)
    return np.vstack(out)


def _contract_short_edges(coords: np.ndarray, edges: np.ndarray,
                          min_length: float) -> Tuple[np.ndarray, np.ndarray]:
    """Merge endpoints of edges shorter than ``min_length`` (union-find);
    removes the near-duplicate vertices a joggled tessellation produces."""
    parent = np.arange(len(coords))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    lengths = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]], axis=1)
    for (a, b) in edges[lengths < min_length]:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    roots = np.array([find(i) for i in range(len(coords))])
    keep, inverse = np.unique(roots, return_inverse=True)
    new_coords = np.zeros((len(keep), 3))
    counts = np.zeros(len(keep))
    np.add.at(new_coords, inverse, coords)
    np.add.at(counts, inverse, 1.0)
    new_coords /= counts[:, None]

    remapped = inverse[edges]
    ok = remapped[:, 0] != remapped[:, 1]
    pairs = np.sort(remapped[ok], axis=1)
    pairs = np.unique(pairs, axis=0)
    return new_coords, pairs


def tessellate_and_filter(points: np.ndarray, box=UNIT_BOX,
                          proximity: float = 0.18,
                          length_filter_factor: float = 3.0,
                          min_edge_length: Optional[float] = None,
                          min_stub_candidates: Tuple[int, int] = (0, 0)):
    """Candidate centerlines from a Voronoi tessellation of seed points.

    Returns ``(coords, edges, inlet_stubs, outlet_stubs)``: vertex
    coordinates (stub nodes appended last), an undirected candidate edge
    list, and the node indices of the terminal stubs projected onto the
    top (inlet) and bottom (outlet) planes. Isolated fragments off the
    largest connected component and segments longer than
    ``length_filter_factor`` times the median are removed.

    ``min_stub_candidates`` widens the proximity bands (up to the cube
    mid-plane) until at least that many top/bottom candidates exist, so
    sparse point clouds can still host the requested boundary counts.

    Raises ``DegenerateTessellation`` for coplanar (or fewer than 8) seed
    points.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) < 8:
        raise DegenerateTessellation("need at least 8 seed points in 3-D")
    centered = points - points.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-10) < 3:
        raise DegenerateTessellation("seed points are coplanar")

    try:
        vor = Voronoi(_mirror_points(points, box), qhull_options="QJ")
    except QhullError as exc:
        raise DegenerateTessellation(str(exc)) from exc

    (x0, y0, z0), (x1, y1, z1) = box
    lo = np.array([x0, y0, z0]) - 1e-9
    hi = np.array([x1, y1, z1]) + 1e-9
    verts = vor.vertices
    inside = np.all((verts >= lo) & (verts <= hi), axis=1)

    edge_set = set()
    for ridge in vor.ridge_vertices:
        rv = [v for v in ridge if v >= 0]
        k = len(rv)
        for i in range(k):
            a, b = rv[i], rv[(i + 1) % k]
            if a != b and inside[a] and inside[b]:
                edge_set.add((min(a, b), max(a, b)))
    if not edge_set:
        raise DegenerateTessellation("tessellation yields no interior edges")

    used = sorted({v for e in edge_set for v in e})
    remap = {v: i for i, v in enumerate(used)}
    coords = verts[used]
    edges = np.array([(remap[a], remap[b]) for a, b in edge_set], dtype=np.int64)

    if min_edge_length is None:
        # Adaptive: follow the tessellation's own scale on dense clouds but
        # never contract more aggressively than the fixed desk-scale value.
        raw = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]], axis=1)
        min_edge_length = min(0.02, 0.3 * float(np.median(raw)))
    coords, edges = _contract_short_edges(coords, edges, min_edge_length)

    lengths = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]], axis=1)
    cutoff = length_filter_factor * np.median(lengths)
    edges = edges[lengths <= cutoff]
    if len(edges) == 0:
        raise DegenerateTessellation("length filter removed every edge")

    coords, edges = _largest_component(coords, edges)

    # Terminal boundary stubs: project near-plane vertices onto z = z1 / z0.
    z = coords[:, 2]
    height = z1 - z0
    cap = 0.45 * height

    def band(side_plane: str, needed: int) -> np.ndarray:
        if side_plane == "top":
            depth = z1 - z
        else:
            depth = z - z0
        eligible = np.flatnonzero((depth >= min_edge_length) & (depth <= cap))
        width = proximity
        if needed > 0 and eligible.size >= needed:
            by_depth = eligible[np.argsort(depth[eligible])]
            width = max(width, float(depth[by_depth[needed - 1]]) + 1e-12)
        return eligible[depth[eligible] <= min(width, cap)]

    top = band("top", min_stub_candidates[0])
    bottom = band("bottom", min_stub_candidates[1])
    stub_coords, stub_edges = [], []
    inlet_stubs, outlet_stubs = [], []
    next_idx = len(coords)
    for node in top:
        stub_coords.append([coords[node, 0], coords[node, 1], z1])
        stub_edges.append((next_idx, node))          # inlet stub -> interior
        inlet_stubs.append(next_idx)
        next_idx += 1
    for node in bottom:
        stub_coords.append([coords[node, 0], coords[node, 1], z0])
        stub_edges.append((node, next_idx))          # interior -> outlet stub
        outlet_stubs.append(next_idx)
        next_idx += 1
    if stub_coords:
        coords = np.vstack([coords, np.array(stub_coords)])
        edges = np.vstack([edges, np.array(stub_edges, dtype=np.int64)])
    return coords, edges, np.array(inlet_stubs, dtype=np.int64), \
        np.array(outlet_stubs, dtype=np.int64)


def _largest_component(coords, edges):
    n = len(coords)
    adj = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])),
                        shape=(n, n))
    ncomp, labels = sp.csgraph.connected_components(adj, directed=False)
    if ncomp > 1:
        counts = np.bincount(labels)
        keep = labels == np.argmax(counts)
        return _subset(coords, edges, keep)
    return coords, edges


def _subset(coords, edges, keep_mask):
    """Restrict to kept nodes, dropping edges touching removed ones."""
    new_index = -np.ones(len(coords), dtype=np.int64)
    new_index[keep_mask] = np.arange(int(np.count_nonzero(keep_mask)))
    ok = keep_mask[edges[:, 0]] & keep_mask[edges[:, 1]]
    return coords[keep_mask], new_index[edges[ok]]


# ---------------------------------------------------------------------------
# Step 3: pruning and degree control
# ---------------------------------------------------------------------------

def _degrees(n, edges):
    deg = np.zeros(n, dtype=np.int64)
    np.add.at(deg, edges[:, 0], 1)
    np.add.at(deg, edges[:, 1], 1)
    return deg


def _prune_dead_ends(coords, edges, protected_nodes):
    """Iteratively strip non-boundary degree-1 (and degree-0) nodes."""
    protected = np.zeros(len(coords), dtype=bool)
    protected[protected_nodes] = True
    while True:
        deg = _degrees(len(coords), edges)
        drop = ((deg <= 1) & ~protected)
        if not np.any(drop):
            return coords, edges, np.flatnonzero(protected)
        keep = ~drop
        coords, edges = _subset(coords, edges, keep)
        protected = protected[keep]


def _shortest_path_core(coords, edges, inlets, outlets):
    """Edges on a shortest path from each inlet to its nearest outlet and
    from each outlet to its nearest inlet (Dijkstra on segment lengths).
    These corridors stay protected through later pruning, guaranteeing
    every boundary node a feasible flow route. Returns a boolean mask over
    ``edges`` or None when a boundary node cannot reach the other side."""
    n = len(coords)
    lengths = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]], axis=1)
    adj = sp.coo_matrix(
        (np.concatenate([lengths, lengths]),
         (np.concatenate([edges[:, 0], edges[:, 1]]),
          np.concatenate([edges[:, 1], edges[:, 0]]))), shape=(n, n)).tocsr()
    edge_id = {}
    for i, (a, b) in enumerate(edges):
        edge_id[(int(a), int(b))] = i
        edge_id[(int(b), int(a))] = i
    core = np.zeros(len(edges), dtype=bool)
    for sources, sinks in ((inlets, outlets), (outlets, inlets)):
        dist, pred = sp.csgraph.dijkstra(adj, indices=sources,
                                         return_predecessors=True)
        for row, source in enumerate(sources):
            reachable = sinks[np.isfinite(dist[row, sinks])]
            if reachable.size == 0:
                return None
            target = reachable[np.argmin(dist[row, reachable])]
            v = int(target)
            while v != source and pred[row, v] >= 0:
                u = int(pred[row, v])
                core[edge_id[(u, v)]] = True
                v = u
    return core


def _enforce_degree_by_pruning(coords, edges, core_mask):
    """Drop unprotected edges at nodes with degree > 3, longest first."""
    lengths = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]], axis=1)
    keep = np.ones(len(edges), dtype=bool)
    deg = _degrees(len(coords), edges)
    incident = [[] for _ in range(len(coords))]
    for i, (a, b) in enumerate(edges):
        incident[a].append(i)
        incident[b].append(i)
    for v in np.flatnonzero(deg > 3):
        removable = [i for i in incident[v] if keep[i] and not core_mask[i]]
        removable.sort(key=lambda i: -lengths[i])
        for i in removable:
            if deg[v] <= 3:
                break
            a, b = edges[i]
            keep[i] = False
            deg[a] -= 1
            deg[b] -= 1
    return edges[keep]


def remove_trifurcations(graph: VascularGraph) -> VascularGraph:
    """Resolve nodes of degree > 3 by detaching their shortest branch onto
    an auxiliary node inserted at the midpoint of an adjacent vessel.

    Preserves connectivity; already-compliant graphs are returned
    unchanged (same object).
    """
    coords = list(map(tuple, graph.coordinates))
    edges = [tuple(e) for e in graph.edges]
    diam = list(graph.diameters)

    def degrees():
        deg = {}
        for a, b in edges:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        return deg

    changed = False
    while True:
        deg = degrees()
        over = [v for v, d in deg.items() if d > 3]
        if not over:
            break
        changed = True
        v = over[0]
        incid = [i for i, (a, b) in enumerate(edges) if v in (a, b)]

        def seg_len(i):
            a, b = edges[i]
            return float(np.linalg.norm(np.subtract(coords[a], coords[b])))

        incid.sort(key=seg_len)
        moved = incid[0]               # shortest branch leaves v
        host = incid[-1]               # re-rooted on the longest neighbor
        ha, hb = edges[host]
        other = hb if ha == v else ha
        mid = tuple((np.asarray(coords[v]) + np.asarray(coords[other])) / 2.0)
        w = len(coords)
        coords.append(mid)
        # split host edge at the auxiliary node
        edges[host] = (v, w)
        edges.append((w, other))
        diam.append(diam[host])
        # re-attach the moved branch to the auxiliary node
        ma, mb = edges[moved]
        far = mb if ma == v else ma
        edges[moved] = (w, far) if ma == v else (far, w)

    if not changed:
        return graph
    coords_arr = np.array(coords)
    edges_arr = np.array(edges, dtype=np.int64)
    lengths = np.linalg.norm(coords_arr[edges_arr[:, 0]] -
                             coords_arr[edges_arr[:, 1]], axis=1)
    return VascularGraph(coords_arr, edges_arr, np.array(diam), lengths)


# ---------------------------------------------------------------------------
# Step 4: diameters
# ---------------------------------------------------------------------------

def assign_diameters(graph: VascularGraph, bc: BoundaryConditions,
                     config: GeneratorConfig,
                     rng: Optional[np.random.Generator] = None,
                     return_bifurcations: bool = False):
    """Diameters from a fourth-power branching rule applied downstream.

    A provisional solve with uniform random diameters orients the flow;
    nodes are then visited in order of decreasing provisional pressure
    (a topological order of the flow digraph). Inlet-incident edges carry
    the maximum diameter. At a Y-bifurcation the parent diameter D and
    daughters satisfy D^4 = D1^4 + D2^4: one daughter is sampled uniformly
    below the parent, the other solved from the rule; both are clamped to
    the configured bounds. Confluences combine as (D1^4 + D2^4)^(1/4);
    pass-through nodes propagate the parent diameter.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    d_min, d_max = config.diameter_bounds
    m = graph.m
    provisional = rng.uniform(d_min, d_max, size=m)
    solution = solve_linear(graph.with_diameters(provisional), bc)
    pressures, flows = solution.pressures, solution.flows

    # Flow orientation with pressure-order fallback for dead flows.
    eps = 1e-14 * float(np.max(np.abs(flows)) or 1.0)
    src = graph.edges[:, 0].copy()
    tgt = graph.edges[:, 1].copy()
    swap = (flows < -eps)
    rank = np.lexsort((np.arange(graph.n), -pressures))   # descending P
    position = np.empty(graph.n, dtype=np.int64)
    position[rank] = np.arange(graph.n)
    dead = np.abs(flows) <= eps
    swap |= dead & (position[src] > position[tgt])
    src[swap], tgt[swap] = tgt[swap].copy(), src[swap].copy()

    out_edges = [[] for _ in range(graph.n)]
    in_edges = [[] for _ in range(graph.n)]
    for i in range(m):
        out_edges[src[i]].append(i)
        in_edges[tgt[i]].append(i)

    is_inlet = np.zeros(graph.n, dtype=bool)
    is_inlet[bc.inlets] = True
    diameters = provisional.copy()
    records = []

    for v in rank:
        outs = sorted(out_edges[v])
        if not outs:
            continue
        if is_inlet[v]:
            for e in outs:
                diameters[e] = d_max
            continue
        ins = in_edges[v]
        if len(ins) == 1 and len(outs) == 2:
            parent = diameters[ins[0]]
            e1, e2 = outs
            d1 = rng.uniform(d_min, min(parent, d_max))
            d2_raw = max(parent ** 4 - d1 ** 4, 0.0) ** 0.25
            d2 = min(max(d2_raw, d_min), d_max)
            diameters[e1], diameters[e2] = d1, d2
            records.append({"node": int(v), "parent": int(ins[0]),
                            "daughters": (int(e1), int(e2)),
                            "clamped": bool(d2 != d2_raw)})
        elif len(ins) == 1 and len(outs) == 1:
            diameters[outs[0]] = diameters[ins[0]]
        elif len(ins) == 2 and len(outs) == 1:
            combined = (diameters[ins[0]] ** 4 + diameters[ins[1]] ** 4) ** 0.25
            diameters[outs[0]] = min(max(combined, d_min), d_max)
        else:
            # Stagnant source pockets or residual irregular joints: keep the
            # provisional draw for those outflow edges.
            pass

    # Boundary vessels are the widest by construction.
    boundary = np.zeros(graph.n, dtype=bool)
    boundary[bc.inlets] = True
    touches_inlet = boundary[graph.edges[:, 0]] | boundary[graph.edges[:, 1]]
    diameters[touches_inlet] = d_max

    diameters = np.clip(diameters, d_min, d_max)
    if return_bifurcations:
        return diameters, records
    return diameters


# ---------------------------------------------------------------------------
# Step 5: surface-to-volume rescaling
# ---------------------------------------------------------------------------

def surface_to_volume(graph: VascularGraph) -> float:
    """Lateral vessel surface over bounding-box volume, in 1/um."""
    surface = float(np.sum(np.pi * graph.diameters * graph.lengths))
    extent = graph.coordinates.max(axis=0) - graph.coordinates.min(axis=0)
    volume = float(np.prod(extent))
    if volume <= 0:
        raise ValueError("degenerate bounding box")
    return surface / volume


def rescale_to_sv(graph: VascularGraph, target_sv: float
                  ) -> Tuple[VascularGraph, float]:
    """Uniform spatial scale (coordinates and lengths; diameters fixed)
    bringing S/V to ``target_sv`` (1/m). Returns (graph, scale factor);
    since S/V varies as scale^-2 the factor is sqrt(current/target)."""
    target_per_um = target_sv * 1e-6
    current = surface_to_volume(graph)
    scale = float(np.sqrt(current / target_per_um))
    scaled = graph.with_geometry(graph.coordinates * scale,
                                 graph.lengths * scale)
    return scaled, scale


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def generate_network(config: GeneratorConfig
                     ) -> Tuple[VascularGraph, BoundaryConditions]:
    """Generate one synthetic capillary network with boundary data.

    Deterministic in ``config`` (including the seed). Internally retries
    with attempt-derived random substreams up to ``config.max_attempts``
    before surfacing ``GenerationFailed``.
    """
    failure: Optional[GenerationFailed] = None
    for attempt in range(config.max_attempts):
        rng = np.random.default_rng([config.seed, attempt])
        try:
            return _generate_once(config, rng)
        except GenerationFailed as exc:
            failure = exc
    raise failure


def expected_point_count(config: GeneratorConfig) -> int:
    """Deterministic seed-point count implied by the layer densities."""
    return sum(max(1, round(d / 3.0)) for d in config.layer_densities)


def _sample_points(config: GeneratorConfig, rng) -> np.ndarray:
    bands = [(0.0, 1 / 3), (1 / 3, 2 / 3), (2 / 3, 1.0)]
    clouds = []
    for density, (z0, z1) in zip(config.layer_densities, bands):
        count = max(1, round(density * (z1 - z0)))
        pts = rng.uniform(size=(count, 3))
        pts[:, 2] = z0 + pts[:, 2] * (z1 - z0)
        clouds.append(pts)
    return np.vstack(clouds)


def _generate_once(config: GeneratorConfig, rng
                   ) -> Tuple[VascularGraph, BoundaryConditions]:
    n_inlets = int(rng.integers(config.inlet_count_range[0],
                                config.inlet_count_range[1] + 1))
    ratio = rng.uniform(*config.outlet_ratio_range)
    n_outlets = max(n_inlets + 1, round(ratio * n_inlets))

    points = _sample_points(config, rng)
    try:
        coords, edges, in_stubs, out_stubs = tessellate_and_filter(
            points, UNIT_BOX, config.plane_proximity,
            config.length_filter_factor, config.min_edge_length,
            min_stub_candidates=(n_inlets, n_outlets))
    except DegenerateTessellation as exc:
        raise GenerationFailed("tessellation", str(exc)) from exc
    if len(in_stubs) < n_inlets or len(out_stubs) < n_outlets:
        raise GenerationFailed(
            "boundaries", f"only {len(in_stubs)} inlet / {len(out_stubs)} "
            f"outlet stub candidates for {n_inlets}/{n_outlets}")
    inlets = rng.choice(in_stubs, size=n_inlets, replace=False)
    outlets = rng.choice(out_stubs, size=n_outlets, replace=False)

    # Drop unselected stubs, keep selected ones through every later stage.
    keep = np.ones(len(coords), dtype=bool)
    keep[np.setdiff1d(np.concatenate([in_stubs, out_stubs]),
                      np.concatenate([inlets, outlets]))] = False
    coords, edges = _subset(coords, edges, keep)
    remap = np.cumsum(keep) - 1
    inlets, outlets = remap[inlets], remap[outlets]

    coords, edges, kept_boundary = _prune_dead_ends(
        coords, edges, np.concatenate([inlets, outlets]))
    if len(kept_boundary) != len(inlets) + len(outlets):
        raise GenerationFailed("pruning", "a boundary stub was pruned away")
    inlets, outlets = _remap_protected(kept_boundary, inlets, outlets)

    core = _shortest_path_core(coords, edges, inlets, outlets)
    if core is None:
        raise GenerationFailed("dijkstra", "an inlet cannot reach any outlet")
    edges = _enforce_degree_by_pruning(coords, edges, core)

    restricted = _largest_component_with(coords, edges, inlets, outlets)
    if restricted is None:
        raise GenerationFailed("pruning", "degree pruning split the boundary")
    coords, edges, inlets, outlets = restricted

    coords, edges, kept_boundary = _prune_dead_ends(
        coords, edges, np.concatenate([inlets, outlets]))
    if len(kept_boundary) != len(inlets) + len(outlets):
        raise GenerationFailed("pruning", "a boundary stub was pruned away")
    inlets, outlets = _remap_protected(kept_boundary, inlets, outlets)

    lengths = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]], axis=1)
    d_lo, d_hi = config.diameter_bounds
    try:
        graph = VascularGraph(coords, edges,
                              np.full(len(edges), 0.5 * (d_lo + d_hi)), lengths)
    except ValueError as exc:
        raise GenerationFailed("assembly", str(exc)) from exc

    graph = remove_trifurcations(graph)

    bc = BoundaryConditions(
        inlets=inlets, outlets=outlets,
        inlet_pressures=rng.uniform(*config.inlet_pressure_range,
                                    size=len(inlets)),
        outlet_pressures=rng.uniform(*config.outlet_pressure_range,
                                     size=len(outlets)),
        inlet_hematocrit=config.inlet_hematocrit,
    )
    try:
        bc.validate(graph, terminal_boundaries=True)
    except Exception as exc:
        raise GenerationFailed("boundaries", str(exc)) from exc

    diameters = assign_diameters(graph, bc, config, rng)
    graph = graph.with_diameters(diameters)
    graph, _ = rescale_to_sv(graph, config.target_sv)

    try:
        solve_linear(graph, bc)
    except Exception as exc:
        raise GenerationFailed("feasibility", str(exc)) from exc
    return graph, bc


def _remap_protected(kept_sorted_new, inlets, outlets):
    """Map old inlet/outlet indices to the new numbering after a subset.

    ``kept_sorted_new`` lists the protected nodes' new indices in ascending
    order; subsetting preserves relative index order, so ranking the old
    indices recovers the correspondence.
    """
    old = np.concatenate([inlets, outlets])
    rank = np.argsort(np.argsort(old))
    renumbered = kept_sorted_new[rank]
    return renumbered[:len(inlets)], renumbered[len(inlets):]


def _largest_component_with(coords, edges, inlets, outlets):
    """Largest component, or None unless it contains every inlet/outlet."""
    n = len(coords)
    adj = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])),
                        shape=(n, n))
    ncomp, labels = sp.csgraph.connected_components(adj, directed=False)
    if ncomp == 1:
        return coords, edges, inlets, outlets
    counts = np.bincount(labels)
    main = np.argmax(counts)
    if not (np.all(labels[inlets] == main) and np.all(labels[outlets] == main)):
        return None
    keep = labels == main
    coords, edges = _subset(coords, edges, keep)
    remap = np.cumsum(keep) - 1
    return coords, edges, remap[inlets], remap[outlets]

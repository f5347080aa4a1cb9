"""Nonlinear-rheology full-order solver.

Couples hematocrit-dependent viscosity with uneven red-blood-cell
partitioning at bifurcations. RBC transport is posed as a linear
convection problem for per-node hematocrit potentials: every edge carries
a skimming coefficient lambda (diameter-ratio powered on bifurcation
daughters, 1 elsewhere) and a pseudo-flux Q* = |Q| * lambda; node potentials
satisfy a flux-balance system assembled from the flow-oriented incidence
structure, with the inlet potentials prescribed to the inlet hematocrit.
Edge hematocrits are recovered as lambda times the upstream potential.

The coupled problem is solved by fixed-point sweeps alternating a flow
solve (viscosity frozen at the current hematocrit) with a potential
update. The convection system is always solved with a sparse direct
factorization; lower-triangularity under a flow-topological node order is
an optimization opportunity, not a correctness requirement, and looped or
tied flow patterns are therefore handled uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AmbiguousOrientation, CyclicFlow, NotConverged
from .graph import BoundaryConditions, VascularGraph, classify_nodes
from .linear import assemble_linear, flow_residuals, solve_system
from .rheology import RheologyParams, blood_viscosity, edge_resistance, \
    velocity_from_flow
from .solution import FlowSolution


@dataclass(frozen=True)
class FixedPointConfig:
    """Controls for the fixed-point coupling loop."""

    initial_hematocrit: float = 0.4
    tolerance: float = 1e-6
    max_iterations: int = 50
    hematocrit_clamp: float = 0.95
    orientation_epsilon: float = 1e-14   # relative to max |Q|
    relaxation: float = 1.0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not (0.0 < self.initial_hematocrit < self.hematocrit_clamp < 1.0):
            raise ValueError("require 0 < H0 < clamp < 1")


@dataclass(frozen=True)
class FlowOrientation:
    """Edges virtually reoriented along the flow direction.

    ``source``/``target`` are the flow-aligned endpoints; ``active`` marks
    edges whose |Q| exceeds the orientation epsilon. Inactive edges keep
    their stored orientation and are excluded from convection.
    """

    source: np.ndarray
    target: np.ndarray
    active: np.ndarray
    magnitude: np.ndarray


@dataclass(frozen=True)
class SkimmingSystem:
    """Assembled plasma-skimming convection problem N H* = N_in H_bar."""

    lambdas: np.ndarray
    q_star: np.ndarray
    convection: sp.csr_matrix
    inlet_matrix: sp.csr_matrix
    orientation: FlowOrientation


def orient_by_flow(graph: VascularGraph, flows: np.ndarray,
                   epsilon: float) -> FlowOrientation:
    """Virtually flip edges with negative flow; |Q| <= epsilon is inactive."""
    flows = np.asarray(flows, dtype=np.float64)
    active = np.abs(flows) > epsilon
    flip = flows < 0
    src = np.where(flip, graph.edges[:, 1], graph.edges[:, 0])
    tgt = np.where(flip, graph.edges[:, 0], graph.edges[:, 1])
    return FlowOrientation(source=src, target=tgt, active=active,
                           magnitude=np.abs(flows))


def flow_topological_order(graph: VascularGraph,
                           orientation: FlowOrientation) -> np.ndarray:
    """Topological node order under the flow orientation (Kahn's algorithm);
    raises ``CyclicFlow`` when the active flow digraph has a cycle."""
    n = graph.n
    src = orientation.source[orientation.active]
    tgt = orientation.target[orientation.active]
    indeg = np.zeros(n, dtype=np.int64)
    np.add.at(indeg, tgt, 1)
    out_lists: list[list[int]] = [[] for _ in range(n)]
    for s, t in zip(src, tgt):
        out_lists[s].append(int(t))
    stack = [int(v) for v in np.flatnonzero(indeg == 0)]
    order = []
    while stack:
        v = stack.pop()
        order.append(v)
        for w in out_lists[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    if len(order) != n:
        raise CyclicFlow("flow orientation induces a directed cycle")
    return np.array(order, dtype=np.int64)


def skimming_coefficients(graph: VascularGraph, flows: np.ndarray,
                          bc: BoundaryConditions, drift: float = 5.25,
                          epsilon: Optional[float] = None,
                          strict: bool = False
                          ) -> Tuple[np.ndarray, FlowOrientation]:
    """Per-edge plasma-skimming coefficients.

    A node is a bifurcation iff it has exactly one active inflow edge and
    at least two active outflow edges under the flow orientation; its
    outflow edges get lambda = (D_daughter / D_parent)^(2/drift), except
    when the node is a prescribed inlet. Confluences, pass-throughs and
    inlet-incident edges get lambda = 1. Inactive (near-zero-flow) edges
    get lambda = 1 and are excluded from node classification; ``strict``
    turns their presence into ``AmbiguousOrientation``.
    """
    if drift <= 0:
        raise ValueError("drift parameter must be positive")
    flows = np.asarray(flows, dtype=np.float64)
    if epsilon is None:
        epsilon = 1e-14 * float(np.max(np.abs(flows)) or 1.0)
    orientation = orient_by_flow(graph, flows, epsilon)
    if strict and not np.all(orientation.active):
        dead = np.flatnonzero(~orientation.active)
        raise AmbiguousOrientation(
            f"{dead.size} edges have |Q| <= epsilon (first: edge {dead[0]})")

    n, m = graph.n, graph.m
    act = orientation.active
    in_count = np.zeros(n, dtype=np.int64)
    out_count = np.zeros(n, dtype=np.int64)
    np.add.at(in_count, orientation.target[act], 1)
    np.add.at(out_count, orientation.source[act], 1)

    # Diameter of the single active inflow edge per node (parent diameter).
    parent_diam = np.zeros(n)
    tgt_act = orientation.target[act]
    parent_diam[tgt_act] = graph.diameters[act]   # valid where in_count == 1

    is_inlet = np.zeros(n, dtype=bool)
    is_inlet[bc.inlets] = True
    bifurcation = (in_count == 1) & (out_count >= 2) & ~is_inlet

    lambdas = np.ones(m)
    upstream = orientation.source
    daughters = act & bifurcation[upstream]
    lambdas[daughters] = (graph.diameters[daughters] /
                          parent_diam[upstream[daughters]]) ** (2.0 / drift)
    return lambdas, orientation


def assemble_convection(graph: VascularGraph, q_star: np.ndarray,
                        bc: BoundaryConditions,
                        orientation: FlowOrientation
                        ) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Assemble the node-potential convection system N H* = N_in H_bar.

    Rows balance pseudo-flux-weighted potentials: outflow of a node against
    the inflow carried from upstream sources. Inlet nodes without active
    inflow get Dirichlet rows prescribing the inlet hematocrit, as do
    stagnant nodes (no active outflow and no outlet correction), whose
    potentials are immaterial but must be well defined.
    """
    n = graph.n
    act = orientation.active
    src = orientation.source[act]
    tgt = orientation.target[act]
    q = np.asarray(q_star, dtype=np.float64)[act]

    # C_or^T diag(Q*) pos(-C_or): -Q* on (src, src), +Q* on (tgt, src).
    rows = np.concatenate([src, tgt])
    cols = np.concatenate([src, src])
    vals = np.concatenate([-q, q])
    n_mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()

    # Outlet correction: subtract diag(B_out C_or^T Q*).
    divergence = np.zeros(n)
    np.add.at(divergence, tgt, q)
    np.add.at(divergence, src, -q)
    outlet_diag = np.zeros(n)
    outlet_diag[bc.outlets] = divergence[bc.outlets]
    n_mat = (n_mat - sp.diags(outlet_diag)).tolil()

    inflow = np.zeros(n)
    np.add.at(inflow, tgt, q)
    is_inlet = np.zeros(n, dtype=bool)
    is_inlet[bc.inlets] = True

    scale = float(np.max(q)) if q.size else 1.0
    diag = n_mat.diagonal()
    dirichlet_inlet = is_inlet & (inflow <= 1e-12 * scale)
    stagnant = (np.abs(diag) <= 1e-12 * scale) & ~dirichlet_inlet

    inlet_rows, inlet_cols = [], []
    fallback = int(bc.inlets[0])
    for j in np.flatnonzero(dirichlet_inlet | stagnant):
        n_mat.rows[j] = [int(j)]
        n_mat.data[j] = [1.0]
        inlet_rows.append(int(j))
        inlet_cols.append(int(j) if dirichlet_inlet[j] else fallback)
    n_in = sp.coo_matrix((np.ones(len(inlet_rows)), (inlet_rows, inlet_cols)),
                         shape=(n, n)).tocsr()
    return n_mat.tocsr(), n_in


def boundary_hematocrit_vector(graph: VascularGraph,
                               bc: BoundaryConditions) -> np.ndarray:
    h_bar = np.zeros(graph.n)
    h_bar[bc.inlets] = bc.inlet_hematocrit
    return h_bar


def solve_potentials(n_mat: sp.csr_matrix, n_in: sp.csr_matrix,
                     h_bar: np.ndarray) -> np.ndarray:
    rhs = np.asarray(n_in @ h_bar).ravel()
    return spla.spsolve(n_mat.tocsc(), rhs)


def recover_edge_hematocrit(lambdas: np.ndarray, orientation: FlowOrientation,
                            h_star: np.ndarray, clamp: float
                            ) -> Tuple[np.ndarray, int]:
    """Edge hematocrit = lambda * upstream node potential, clamped to
    [0, clamp]; returns (H, number of clamped edges)."""
    h = lambdas * h_star[orientation.source]
    clamped = (h < 0.0) | (h > clamp)
    return np.clip(h, 0.0, clamp), int(np.count_nonzero(clamped))


def build_skimming_system(graph: VascularGraph, flows: np.ndarray,
                          bc: BoundaryConditions,
                          params: RheologyParams,
                          config: FixedPointConfig) -> SkimmingSystem:
    epsilon = config.orientation_epsilon * float(np.max(np.abs(flows)) or 1.0)
    lambdas, orientation = skimming_coefficients(
        graph, flows, bc, drift=params.drift, epsilon=epsilon)
    q_star = orientation.magnitude * lambdas
    q_star = np.where(orientation.active, q_star, 0.0)
    n_mat, n_in = assemble_convection(graph, q_star, bc, orientation)
    return SkimmingSystem(lambdas=lambdas, q_star=q_star, convection=n_mat,
                          inlet_matrix=n_in, orientation=orientation)


def rbc_balance_residual(graph: VascularGraph, bc: BoundaryConditions,
                         flows: np.ndarray, hematocrits: np.ndarray,
                         clamp: float, epsilon: float) -> float:
    """Max relative RBC imbalance |sum_in QH - sum_out QH| over interior
    nodes whose incident edges are all unclamped and active."""
    orientation = orient_by_flow(graph, flows, epsilon)
    n = graph.n
    flux = orientation.magnitude * hematocrits
    rbc_in = np.zeros(n)
    rbc_out = np.zeros(n)
    act = orientation.active
    np.add.at(rbc_in, orientation.target[act], flux[act])
    np.add.at(rbc_out, orientation.source[act], flux[act])

    ok = np.ones(n, dtype=bool)
    near_clamp = (hematocrits >= clamp - 1e-12) | (hematocrits <= 1e-12)
    for nodes in (orientation.source[near_clamp | ~act],
                  orientation.target[near_clamp | ~act]):
        ok[nodes] = False
    ok[bc.inlets] = False
    ok[bc.outlets] = False
    if not np.any(ok):
        return 0.0
    scale = float(np.max(rbc_in[ok])) or 1.0
    return float(np.max(np.abs(rbc_in[ok] - rbc_out[ok])) / scale)


def solve_nonlinear(graph: VascularGraph, bc: BoundaryConditions,
                    params: Optional[RheologyParams] = None,
                    config: Optional[FixedPointConfig] = None,
                    viscosity_law: Optional[Callable] = None,
                    raise_on_nonconvergence: bool = True) -> FlowSolution:
    """Fixed-point solve of the hematocrit-coupled flow problem.

    Each sweep (i) solves the flow with viscosity frozen at the current
    hematocrit and (ii) updates node potentials and edge hematocrits from
    the new flow field. Convergence is the relative infinity-norm change
    of the edge hematocrit field. On exhaustion of the iteration budget a
    ``NotConverged`` error carrying the flagged last iterate is raised
    (or, with ``raise_on_nonconvergence=False``, that iterate is returned).
    """
    params = params or RheologyParams()
    config = config or FixedPointConfig()
    viscosity_law = viscosity_law or blood_viscosity
    bc.validate(graph)

    h = np.full(graph.m, config.initial_hematocrit)
    pressures = flows = None
    h_star = np.zeros(graph.n)
    clamp_count = 0
    skim = None
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iterations + 1):
        mu = viscosity_law(graph.diameters, h, params.mu_plasma)
        resistances = edge_resistance(graph.diameters, graph.lengths, mu)
        flow_solution = _solve_flow(graph, bc, params, resistances)
        pressures, flows = flow_solution

        skim = build_skimming_system(graph, flows, bc, params, config)
        h_bar = boundary_hematocrit_vector(graph, bc)
        h_star = solve_potentials(skim.convection, skim.inlet_matrix, h_bar)
        h_new, clamp_count = recover_edge_hematocrit(
            skim.lambdas, skim.orientation, h_star, config.hematocrit_clamp)

        delta = float(np.max(np.abs(h_new - h)))
        scale = max(float(np.max(np.abs(h))), config.initial_hematocrit)
        h = h + config.relaxation * (h_new - h)
        if delta / scale < config.tolerance:
            converged = True
            break

    epsilon = config.orientation_epsilon * float(np.max(np.abs(flows)) or 1.0)
    mu = viscosity_law(graph.diameters, h, params.mu_plasma)
    resistances = edge_resistance(graph.diameters, graph.lengths, mu)
    residuals = flow_residuals(graph, classify_nodes(graph, bc), resistances,
                               pressures, flows)
    residuals["rbc_balance_rel"] = rbc_balance_residual(
        graph, bc, flows, h, config.hematocrit_clamp, epsilon)

    solution = FlowSolution(
        pressures=pressures,
        flows=flows,
        velocities=velocity_from_flow(flows, graph.diameters),
        hematocrits=h,
        node_potentials=h_star,
        residuals=residuals,
        iterations=iterations,
        converged=converged,
        clamp_count=clamp_count,
    )
    if not converged and raise_on_nonconvergence:
        raise NotConverged(
            f"no convergence within {config.max_iterations} iterations "
            f"(last relative change above {config.tolerance})", solution)
    return solution


def _solve_flow(graph, bc, params, resistances):
    system = assemble_linear(graph, bc, params, resistances)
    x = solve_system(system)
    return x[:graph.n], x[graph.n:]

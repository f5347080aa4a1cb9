"""Linear-rheology full-order solver.

The hydraulic state stacks nodal pressures P (n) and edge flows Q (m) into
one unknown vector [P; Q] of length n+m. Flows are signed along the stored
edge orientation: Q_i > 0 means flow from source to target, so each edge
contributes the constitutive row

    P_source(i) - P_target(i) - R_i Q_i = 0.

Node rows impose the incidence mass balance (C^T Q)_j = 0 at interior
nodes and unit-diagonal Dirichlet rows with the prescribed pressure at
boundary nodes. The assembled sparse system is solved with a direct sparse
LU factorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystem
from .graph import BoundaryConditions, NodeClassification, VascularGraph, \
    build_incidence, classify_nodes
from .rheology import RheologyParams, edge_resistance, velocity_from_flow
from .solution import FlowSolution


@dataclass(frozen=True)
class LinearSystem:
    """Assembled mixed pressure/flow system L x = f with x = [P; Q]."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    resistances: np.ndarray
    classes: NodeClassification

    @property
    def size(self) -> int:
        return self.rhs.shape[0]


def assemble_linear(graph: VascularGraph, bc: BoundaryConditions,
                    params: Optional[RheologyParams] = None,
                    resistances: Optional[np.ndarray] = None) -> LinearSystem:
    """Assemble the (n+m) x (n+m) system for given boundary conditions.

    ``resistances`` (mmHg*s/um^3) overrides the constant-viscosity
    Poiseuille values; the nonlinear solver passes hematocrit-dependent
    ones through here.
    """
    params = params or RheologyParams()
    bc.validate(graph)
    classes = classify_nodes(graph, bc)
    n, m = graph.n, graph.m
    if resistances is None:
        resistances = edge_resistance(graph.diameters, graph.lengths, params.mu)
    resistances = np.asarray(resistances, dtype=np.float64)

    inc = build_incidence(graph)                      # +1 target, -1 source

    # Edge rows 0..m-1: (P_s - P_t) - R Q = 0  <=>  [-C | -diag(R)].
    top = sp.hstack([-inc, -sp.diags(resistances)], format="csr")

    # Node rows m..m+n-1: interior mass balance, Dirichlet at boundaries.
    interior_mask = classes.labels == NodeClassification.INTERIOR
    mass = sp.diags(interior_mask.astype(np.float64)) @ inc.T
    dirichlet = sp.diags((~interior_mask).astype(np.float64))
    bottom = sp.hstack([dirichlet, mass], format="csr")

    rhs = np.zeros(n + m)
    rhs[m + bc.inlets] = bc.inlet_pressures
    rhs[m + bc.outlets] = bc.outlet_pressures

    matrix = sp.vstack([top, bottom], format="csc")
    return LinearSystem(matrix=matrix, rhs=rhs, resistances=resistances,
                        classes=classes)


def _equilibration(matrix: sp.csc_matrix):
    """Power-of-two row/column scalings taming the scale gap between
    O(1) incidence entries and tiny resistance coefficients. Powers of two
    are exact in binary floating point, so the scaling changes conditioning
    without introducing rounding."""
    absolute = abs(matrix)
    row_max = np.asarray(absolute.max(axis=1).todense()).ravel()
    row_scale = np.exp2(-np.round(np.log2(np.maximum(row_max, 1e-300))))
    scaled = sp.diags(row_scale) @ matrix
    col_max = np.asarray(abs(scaled).max(axis=0).todense()).ravel()
    col_scale = np.exp2(-np.round(np.log2(np.maximum(col_max, 1e-300))))
    return row_scale, col_scale


def solve_system(system: LinearSystem) -> np.ndarray:
    """Direct sparse LU solve of an assembled system (equilibrated); raises
    ``SingularSystem`` when the factorization fails or returns non-finite
    values (disconnected component without a boundary node)."""
    row_scale, col_scale = _equilibration(system.matrix)
    matrix = sp.diags(row_scale) @ system.matrix @ sp.diags(col_scale)
    try:
        lu = spla.splu(matrix.tocsc())
        x = col_scale * lu.solve(row_scale * system.rhs)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("solution contains non-finite values")
    return x


def solve_system_dense(system: LinearSystem) -> np.ndarray:
    """Dense LAPACK solve of the same assembled system (oracle path)."""
    row_scale, col_scale = _equilibration(system.matrix)
    a = (sp.diags(row_scale) @ system.matrix @ sp.diags(col_scale)).toarray()
    try:
        return col_scale * np.linalg.solve(a, row_scale * system.rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


def flow_residuals(graph: VascularGraph, classes: NodeClassification,
                   resistances: np.ndarray, pressures: np.ndarray,
                   flows: np.ndarray) -> dict:
    """Verification residuals at a state: max constitutive defect
    |P_s - P_t - R Q| relative to max inlet pressure, and max interior
    mass defect |(C^T Q)_j| relative to max |Q|."""
    inc = build_incidence(graph)
    drop = pressures[graph.edges[:, 0]] - pressures[graph.edges[:, 1]]
    constitutive = np.abs(drop - resistances * flows)
    divergence = np.asarray(inc.T @ flows).ravel()
    interior = divergence[classes.interior] if classes.interior.size else np.zeros(1)
    p_scale = float(np.max(np.abs(pressures))) or 1.0
    q_scale = float(np.max(np.abs(flows))) or 1.0
    return {
        "constitutive_inf": float(np.max(constitutive)),
        "constitutive_rel": float(np.max(constitutive) / p_scale),
        "mass_interior_inf": float(np.max(np.abs(interior))),
        "mass_interior_rel": float(np.max(np.abs(interior)) / q_scale),
    }


def solve_linear(graph: VascularGraph, bc: BoundaryConditions,
                 params: Optional[RheologyParams] = None,
                 resistances: Optional[np.ndarray] = None) -> FlowSolution:
    """Solve the constant-viscosity Poiseuille network flow problem."""
    system = assemble_linear(graph, bc, params, resistances)
    x = solve_system(system)
    pressures, flows = x[:graph.n], x[graph.n:]
    residuals = flow_residuals(graph, system.classes, system.resistances,
                               pressures, flows)
    return FlowSolution(
        pressures=pressures,
        flows=flows,
        velocities=velocity_from_flow(flows, graph.diameters),
        residuals=residuals,
        iterations=1,
        converged=True,
    )

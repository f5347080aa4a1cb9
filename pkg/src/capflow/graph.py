"""Core vascular graph data model and incidence algebra.

A vascular network is a finite oriented graph: nodes carry 3-D coordinates
(micrometres), edges carry a positive diameter and length (micrometres).
Edge orientation is the *stored* direction, not necessarily the flow
direction; solvers reorient internally from flow signs.

All objects here are immutable value objects: arrays are copied on
construction and frozen, so graphs can be shared freely across workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import EmptyBoundary, InvalidBoundary, OverlappingBoundary


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


class VascularGraph:
    """Oriented vascular graph with geometry.

    Parameters
    ----------
    coordinates : (n, 3) array of node positions in um.
    edges : (m, 2) integer array of (source, target) node indices, 0-based.
    diameters : (m,) positive vessel diameters in um.
    lengths : (m,) positive vessel lengths in um.
    require_connected : reject weakly disconnected graphs (default). File
        import relaxes this to a warning so that flagged-but-loadable
        networks can still be inspected.
    """

    __slots__ = ("coordinates", "edges", "diameters", "lengths", "n", "m",
                 "_adjacency", "_incidence")

    def __init__(self, coordinates, edges, diameters, lengths, *,
                 require_connected: bool = True):
        self.coordinates = _frozen(coordinates, np.float64)
        self.edges = _frozen(edges, np.int64)
        self.diameters = _frozen(diameters, np.float64)
        self.lengths = _frozen(lengths, np.float64)
        self._adjacency = None
        self._incidence = None

        if self.coordinates.ndim != 2 or self.coordinates.shape[1] != 3:
            raise ValueError("coordinates must have shape (n, 3)")
        if self.edges.ndim != 2 or self.edges.shape[1] != 2:
            raise ValueError("edges must have shape (m, 2)")
        self.n = self.coordinates.shape[0]
        self.m = self.edges.shape[0]
        if self.n < 2 or self.m < 1:
            raise ValueError("graph needs at least 2 nodes and 1 edge")
        if not np.all(np.isfinite(self.coordinates)):
            raise ValueError("coordinates must be finite")
        if self.diameters.shape != (self.m,) or self.lengths.shape != (self.m,):
            raise ValueError("diameters/lengths must have one entry per edge")
        if not (np.all(self.diameters > 0) and np.all(np.isfinite(self.diameters))):
            raise ValueError("diameters must be positive and finite")
        if not (np.all(self.lengths > 0) and np.all(np.isfinite(self.lengths))):
            raise ValueError("lengths must be positive and finite")
        src, tgt = self.edges[:, 0], self.edges[:, 1]
        if src.min(initial=0) < 0 or max(src.max(initial=0), tgt.max(initial=0)) >= self.n:
            raise ValueError("edge references an invalid node index")
        if np.any(src == tgt):
            raise ValueError("self-loops are not allowed")
        if len({(int(s), int(t)) for s, t in self.edges}) != self.m:
            raise ValueError("duplicate (source, target) edge")

        if not self.is_weakly_connected():
            if require_connected:
                raise ValueError("graph is not weakly connected")
            warnings.warn("graph is not weakly connected", stacklevel=2)

    # -- topology helpers -------------------------------------------------

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric unweighted adjacency (cached)."""
        if self._adjacency is None:
            src, tgt = self.edges[:, 0], self.edges[:, 1]
            ones = np.ones(self.m)
            a = sp.coo_matrix((ones, (src, tgt)), shape=(self.n, self.n))
            self._adjacency = (a + a.T).tocsr()
        return self._adjacency

    def degrees(self) -> np.ndarray:
        """Undirected node degrees."""
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def is_weakly_connected(self) -> bool:
        ncomp, _ = sp.csgraph.connected_components(self.adjacency(), directed=False)
        return ncomp == 1

    def component_labels(self) -> np.ndarray:
        _, labels = sp.csgraph.connected_components(self.adjacency(), directed=False)
        return labels

    # -- derived copies ----------------------------------------------------

    def with_diameters(self, diameters) -> "VascularGraph":
        return VascularGraph(self.coordinates, self.edges, diameters, self.lengths)

    def with_geometry(self, coordinates, lengths) -> "VascularGraph":
        return VascularGraph(coordinates, self.edges, self.diameters, lengths)

    def __repr__(self) -> str:
        return f"VascularGraph(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class BoundaryConditions:
    """Dirichlet boundary data: inlet/outlet node sets with pressures (mmHg)
    and the inlet discharge hematocrit.

    ``inlet_pressures``/``outlet_pressures`` may be ``None`` for skeletons
    produced by boundary detection; ``validate`` then rejects them for
    solver use.
    """

    inlets: np.ndarray
    outlets: np.ndarray
    inlet_pressures: Optional[np.ndarray] = None
    outlet_pressures: Optional[np.ndarray] = None
    inlet_hematocrit: float = 0.45

    def __post_init__(self):
        object.__setattr__(self, "inlets", _frozen(np.atleast_1d(self.inlets), np.int64))
        object.__setattr__(self, "outlets", _frozen(np.atleast_1d(self.outlets), np.int64))
        for name in ("inlet_pressures", "outlet_pressures"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _frozen(np.atleast_1d(v), np.float64))

    @property
    def has_pressures(self) -> bool:
        return self.inlet_pressures is not None and self.outlet_pressures is not None

    def validate(self, graph: VascularGraph, *, require_pressures: bool = True,
                 terminal_boundaries: bool = False) -> None:
        """Check the boundary invariants against a graph.

        With ``terminal_boundaries`` every boundary node must have degree 1
        (generated networks); otherwise higher degrees only warn, which is
        the imported-network regime.
        """
        if self.inlets.size == 0 or self.outlets.size == 0:
            raise InvalidBoundary("inlet and outlet sets must both be nonempty")
        both = np.intersect1d(self.inlets, self.outlets)
        if both.size:
            raise OverlappingBoundary(f"nodes {both.tolist()} are inlet and outlet")
        allb = np.concatenate([self.inlets, self.outlets])
        if allb.min() < 0 or allb.max() >= graph.n:
            raise InvalidBoundary("boundary node index out of range")
        if len(set(self.inlets.tolist())) != self.inlets.size or \
           len(set(self.outlets.tolist())) != self.outlets.size:
            raise InvalidBoundary("duplicate node in a boundary set")
        deg = graph.degrees()[allb]
        if np.any(deg > 1):
            msg = f"{int(np.sum(deg > 1))} boundary nodes have degree > 1"
            if terminal_boundaries:
                raise InvalidBoundary(msg)
            warnings.warn(msg, stacklevel=2)
        if require_pressures:
            if not self.has_pressures:
                raise InvalidBoundary("boundary pressures are unset")
            if self.inlet_pressures.shape != self.inlets.shape or \
               self.outlet_pressures.shape != self.outlets.shape:
                raise InvalidBoundary("pressure arrays must match boundary sets")
            if not (np.all(np.isfinite(self.inlet_pressures)) and
                    np.all(np.isfinite(self.outlet_pressures))):
                raise InvalidBoundary("boundary pressures must be finite")
            if self.inlet_pressures.min() <= self.outlet_pressures.max():
                raise InvalidBoundary(
                    "every inlet pressure must exceed every outlet pressure")
        if not (0.0 < self.inlet_hematocrit < 1.0):
            raise InvalidBoundary("inlet hematocrit must lie in (0, 1)")


@dataclass(frozen=True)
class NodeClassification:
    """Partition of node indices into interior / inlet / outlet."""

    labels: np.ndarray          # 0 interior, 1 inlet, 2 outlet
    inlets: np.ndarray
    outlets: np.ndarray
    interior: np.ndarray

    INTERIOR, INLET, OUTLET = 0, 1, 2


def build_incidence(graph: VascularGraph) -> sp.csr_matrix:
    """Oriented incidence matrix C (m x n): row i holds +1 at target(i) and
    -1 at source(i)."""
    if graph._incidence is None:
        m, n = graph.m, graph.n
        rows = np.repeat(np.arange(m), 2)
        cols = graph.edges.reshape(-1)          # (src, tgt) pairs flattened
        vals = np.tile(np.array([-1.0, 1.0]), m)
        inc = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        inc.sort_indices()
        graph._incidence = inc
    return graph._incidence


def classify_nodes(graph: VascularGraph, bc: BoundaryConditions) -> NodeClassification:
    """Label every node as interior, inlet or outlet.

    Raises ``OverlappingBoundary`` when the inlet and outlet sets intersect.
    """
    both = np.intersect1d(bc.inlets, bc.outlets)
    if both.size:
        raise OverlappingBoundary(f"nodes {both.tolist()} are inlet and outlet")
    labels = np.zeros(graph.n, dtype=np.int64)
    labels[bc.inlets] = NodeClassification.INLET
    labels[bc.outlets] = NodeClassification.OUTLET
    return NodeClassification(
        labels=_frozen(labels, np.int64),
        inlets=bc.inlets,
        outlets=bc.outlets,
        interior=_frozen(np.flatnonzero(labels == 0), np.int64),
    )


def detect_boundaries_by_diameter(graph: VascularGraph, arterial_root: int,
                                  venous_root: int, threshold: float,
                                  inlet_hematocrit: float = 0.45) -> BoundaryConditions:
    """Boundary skeleton for imported anatomical networks.

    Inlets are the nodes (other than the root itself) reachable from
    ``arterial_root`` through edges with diameter strictly greater than
    ``threshold`` um; outlets analogously from ``venous_root``. Pressures
    are left unset.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    for root in (arterial_root, venous_root):
        if not (0 <= root < graph.n):
            raise ValueError(f"root index {root} out of range")

    def reach(root: int) -> np.ndarray:
        keep = graph.diameters > threshold
        if not np.any(keep):
            return np.empty(0, dtype=np.int64)
        e = graph.edges[keep]
        ones = np.ones(len(e))
        a = sp.coo_matrix((ones, (e[:, 0], e[:, 1])), shape=(graph.n, graph.n))
        a = (a + a.T).tocsr()
        order = sp.csgraph.breadth_first_order(a, root, directed=False,
                                               return_predecessors=False)
        return np.setdiff1d(order, [root])

    inlets = reach(arterial_root)
    outlets = reach(venous_root)
    if inlets.size == 0 or outlets.size == 0:
        side = "arterial" if inlets.size == 0 else "venous"
        raise EmptyBoundary(f"no nodes above {threshold} um on the {side} side")
    overlap = np.intersect1d(inlets, outlets)
    if overlap.size:
        raise OverlappingBoundary(
            f"the wide-vessel components of both roots share "
            f"{overlap.size} nodes; raise the threshold")
    return BoundaryConditions(inlets=inlets, outlets=outlets,
                              inlet_hematocrit=inlet_hematocrit)

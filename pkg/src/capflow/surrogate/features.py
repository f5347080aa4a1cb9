"""Input feature construction for the surrogate models.

Node features (width 6): the prescribed inlet pressure (0 at non-inlets),
the prescribed outlet pressure (0 at non-outlets), the global max inlet
and min outlet pressures broadcast to every node, and inlet/outlet
indicator flags. The flags disambiguate "boundary with pressure 0" from
"interior": the pressure slots alone cannot encode that.

Edge features: diameter and length (plus the inlet hematocrit for the
nonlinear variant). All physical entries are normalized by configured
scales so they land in [0, 1]; flags are already 0/1.

The graph handed to the network is undirected: each stored edge gets a
reverse companion carrying identical features. Directed edge i runs
forward as row i and reversed as row m + i.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from ..graph import BoundaryConditions, VascularGraph

NODE_FEATURE_DIM = 6


def edge_feature_dim(variant: int) -> int:
    return 3 if variant == 4 else 2


@dataclass(frozen=True)
class FeatureScales:
    """Normalization constants; stored with every checkpoint."""

    pressure: float = 35.0
    diameter: float = 12.0
    length: float = 100.0

    def __post_init__(self):
        if min(self.pressure, self.diameter, self.length) <= 0:
            raise ValueError("feature scales must be positive")


def feature_scales_for(pairs: Sequence[Tuple[VascularGraph, BoundaryConditions]]
                       ) -> FeatureScales:
    """Scales covering a dataset: the max observed pressure, diameter and
    length, so every normalized feature lies in [0, 1]."""
    pressure = diameter = length = 0.0
    for graph, bc in pairs:
        pressure = max(pressure, float(np.max(bc.inlet_pressures)))
        diameter = max(diameter, float(np.max(graph.diameters)))
        length = max(length, float(np.max(graph.lengths)))
    return FeatureScales(pressure=pressure, diameter=diameter, length=length)


@dataclass(frozen=True)
class GraphFeatures:
    """Feature arrays plus the symmetrized incidence lists.

    ``adjacency`` is the symmetric neighbor-sum matrix of the symmetrized
    graph (entry (j, s) counts directed edges s -> j) and ``indegree`` its
    diagonal counterpart, both used for pooled message aggregation.
    """

    node: np.ndarray          # (n, 6)
    edge: np.ndarray          # (2m, 2 or 3)
    src: np.ndarray           # (2m,)
    tgt: np.ndarray           # (2m,)
    n: int
    m: int
    adjacency: sp.csr_matrix = None
    indegree: np.ndarray = None


def build_features(graph: VascularGraph, bc: BoundaryConditions, variant: int,
                   scales: FeatureScales) -> GraphFeatures:
    """Normalized node/edge features and the symmetrized edge lists."""
    bc.validate(graph)
    n, m = graph.n, graph.m
    node = np.zeros((n, NODE_FEATURE_DIM))
    node[bc.inlets, 0] = bc.inlet_pressures / scales.pressure
    node[bc.outlets, 1] = bc.outlet_pressures / scales.pressure
    node[:, 2] = np.max(bc.inlet_pressures) / scales.pressure
    node[:, 3] = np.min(bc.outlet_pressures) / scales.pressure
    node[bc.inlets, 4] = 1.0
    node[bc.outlets, 5] = 1.0

    one_way = np.empty((m, edge_feature_dim(variant)))
    one_way[:, 0] = graph.diameters / scales.diameter
    one_way[:, 1] = graph.lengths / scales.length
    if variant == 4:
        one_way[:, 2] = bc.inlet_hematocrit
    edge = np.vstack([one_way, one_way])

    src = np.concatenate([graph.edges[:, 0], graph.edges[:, 1]])
    tgt = np.concatenate([graph.edges[:, 1], graph.edges[:, 0]])
    adjacency = sp.coo_matrix(
        (np.ones(2 * m), (tgt, src)), shape=(n, n)).tocsr()
    indegree = np.asarray(adjacency.sum(axis=1), dtype=np.float64)
    return GraphFeatures(node=node, edge=edge, src=src, tgt=tgt, n=n, m=m,
                         adjacency=adjacency, indegree=indegree)

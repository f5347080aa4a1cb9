"""Shared fixtures: small hand-built networks and generated ones."""


import numpy as np
import pytest

from capflow import BoundaryConditions, GeneratorConfig, VascularGraph, \
    generate_network


def make_graph(coords, edges, diameters, bc=None, lengths=None):
    """Graph from coordinate/edge lists; lengths default to chord lengths."""
    coords = np.asarray(coords, dtype=float)
    edges = np.asarray(edges, dtype=np.int64)
    if lengths is None:
        lengths = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]],
                                 axis=1)
    graph = VascularGraph(coords, edges, np.asarray(diameters, float), lengths)
    return graph if bc is None else (graph, bc)


@pytest.fixture
def single_tube():
    """One vessel from an inlet to an outlet."""
    graph = make_graph([[0, 0, 100], [0, 0, 0]], [(0, 1)], [8.0])
    bc = BoundaryConditions(inlets=[0], outlets=[1], inlet_pressures=[32.0],
                            outlet_pressures=[12.0], inlet_hematocrit=0.45)
    return graph, bc


@pytest.fixture
def series_pair():
    """Two equal-resistance vessels in series with an interior midpoint."""
    graph = make_graph([[0, 0, 200], [0, 0, 100], [0, 0, 0]],
                       [(0, 1), (1, 2)], [8.0, 8.0])
    bc = BoundaryConditions(inlets=[0], outlets=[2], inlet_pressures=[30.0],
                            outlet_pressures=[10.0], inlet_hematocrit=0.45)
    return graph, bc


@pytest.fixture
def symmetric_y():
    """One inlet feeding two identical outlet branches."""
    graph = make_graph(
        [[0, 0, 100], [0, 0, 50], [40, 0, 0], [-40, 0, 0]],
        [(0, 1), (1, 2), (1, 3)], [10.0, 7.0, 7.0])
    bc = BoundaryConditions(inlets=[0], outlets=[2, 3],
                            inlet_pressures=[33.0],
                            outlet_pressures=[11.0, 11.0],
                            inlet_hematocrit=0.45)
    return graph, bc


@pytest.fixture
def asymmetric_net():
    """Small loop-free network with unequal branches (all boundaries
    terminal)."""
    coords = np.array([
        [0, 0, 120], [0, 0, 90], [25, 0, 60], [-25, 0, 60],
        [25, 0, 30], [-25, 0, 30], [0, 0, 10], [0, 0, -10],
        [60, 0, 30], [40, 10, 60],
    ], dtype=float)
    edges = [(0, 1), (1, 2), (1, 3), (2, 4), (3, 5), (4, 6), (5, 6),
             (6, 7), (2, 9), (9, 4), (4, 8)]
    diameters = [11.0, 8.0, 7.5, 6.0, 6.5, 5.5, 5.8, 9.0, 4.5, 4.4, 5.0]
    graph = make_graph(coords, edges, diameters)
    bc = BoundaryConditions(inlets=[0], outlets=[7, 8],
                            inlet_pressures=[34.0],
                            outlet_pressures=[12.0, 13.0],
                            inlet_hematocrit=0.45)
    return graph, bc


@pytest.fixture(scope="session")
def generated_small():
    """Deterministic generated network at desk scale (~120 nodes)."""
    return generate_network(GeneratorConfig(seed=101))


@pytest.fixture(scope="session")
def generated_paper_scale():
    """Deterministic generated network at study scale (~300 nodes)."""
    return generate_network(GeneratorConfig.paper_scale(seed=77))

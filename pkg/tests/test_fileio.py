"""Graph/solution file round trips and schema diagnostics."""

import json

import numpy as np
import pytest

from capflow import BoundaryConditions, GeneratorConfig, generate_network, \
    solve_nonlinear
from capflow.errors import SchemaError
from capflow.fileio import read_graph, read_solution, write_graph, \
    write_solution

from conftest import make_graph


def assert_graph_equal(a, b):
    ga, bca = a
    gb, bcb = b
    assert np.array_equal(ga.coordinates, gb.coordinates)
    assert np.array_equal(ga.edges, gb.edges)
    assert np.array_equal(ga.diameters, gb.diameters)
    assert np.array_equal(ga.lengths, gb.lengths)
    assert np.array_equal(bca.inlets, bcb.inlets)
    assert np.array_equal(bca.outlets, bcb.outlets)
    assert np.array_equal(bca.inlet_pressures, bcb.inlet_pressures)
    assert np.array_equal(bca.outlet_pressures, bcb.outlet_pressures)
    assert bca.inlet_hematocrit == bcb.inlet_hematocrit


def test_two_node_round_trip(tmp_path, single_tube=None):
    graph = make_graph([[0.1, 0.2, 100.123456789], [0, 0, 0]], [(0, 1)],
                       [8.000000001])
    bc = BoundaryConditions(inlets=[0], outlets=[1],
                            inlet_pressures=[32.25],
                            outlet_pressures=[12.124999999999998],
                            inlet_hematocrit=0.45)
    path = tmp_path / "g.json"
    write_graph(graph, bc, path)
    assert_graph_equal(read_graph(path), (graph, bc))


def test_bad_edge_index(tmp_path):
    doc = {
        "format_version": 1,
        "nodes": [[0, 0, 0], [0, 0, 1]],
        "edges": [{"source": 0, "target": 2, "diameter_um": 5.0,
                   "length_um": 1.0}],
        "boundary": {"inlets": [{"node": 0, "pressure_mmHg": 30.0}],
                     "outlets": [{"node": 1, "pressure_mmHg": 10.0}],
                     "inlet_hematocrit": 0.45},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match=r"edges\[0\].target"):
        read_graph(path)


def test_malformed_json_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n "format_version": 1,\n "nodes": [[0,0,0],\n!')
    with pytest.raises(SchemaError, match="line"):
        read_graph(path)


def test_missing_field_diagnostics(tmp_path):
    path = tmp_path / "missing.json"
    path.write_text(json.dumps({"format_version": 1, "nodes": [[0, 0, 0]]}))
    with pytest.raises(SchemaError, match="edges"):
        read_graph(path)


def test_wrong_version(tmp_path):
    path = tmp_path / "v2.json"
    path.write_text(json.dumps({"format_version": 2}))
    with pytest.raises(SchemaError, match="format_version"):
        read_graph(path)


def test_mixed_unset_pressures_rejected(tmp_path):
    doc = {
        "format_version": 1,
        "nodes": [[0, 0, 0], [0, 0, 1], [0, 0, 2]],
        "edges": [{"source": 0, "target": 1, "diameter_um": 5.0,
                   "length_um": 1.0},
                  {"source": 1, "target": 2, "diameter_um": 5.0,
                   "length_um": 1.0}],
        "boundary": {"inlets": [{"node": 0, "pressure_mmHg": 30.0},
                                {"node": 1, "pressure_mmHg": None}],
                     "outlets": [{"node": 2, "pressure_mmHg": 10.0}],
                     "inlet_hematocrit": 0.45},
    }
    path = tmp_path / "mixed.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match="mixes"):
        read_graph(path)


def test_generated_network_round_trip(tmp_path, generated_paper_scale):
    graph, bc = generated_paper_scale
    path = tmp_path / "gen.json"
    write_graph(graph, bc, path)
    assert_graph_equal(read_graph(path), (graph, bc))


def test_round_trip_property_random_graphs(tmp_path):
    for seed in range(8):
        graph, bc = generate_network(GeneratorConfig(seed=1000 + seed))
        path = tmp_path / f"r{seed}.json"
        write_graph(graph, bc, path)
        assert_graph_equal(read_graph(path), (graph, bc))


def test_skeleton_boundary_round_trip(tmp_path):
    graph = make_graph([[0, 0, 0], [0, 0, 1]], [(0, 1)], [8.0])
    bc = BoundaryConditions(inlets=[0], outlets=[1])
    path = tmp_path / "skel.json"
    write_graph(graph, bc, path)
    _, bc2 = read_graph(path)
    assert bc2.inlet_pressures is None and bc2.outlet_pressures is None


def test_solution_round_trip(tmp_path, generated_small):
    graph, bc = generated_small
    solution = solve_nonlinear(graph, bc)
    path = tmp_path / "sol.json"
    write_solution(solution, path)
    loaded = read_solution(path)
    assert np.array_equal(loaded.pressures, solution.pressures)
    assert np.array_equal(loaded.flows, solution.flows)
    assert np.array_equal(loaded.velocities, solution.velocities)
    assert np.array_equal(loaded.hematocrits, solution.hematocrits)
    assert np.array_equal(loaded.node_potentials, solution.node_potentials)
    assert loaded.iterations == solution.iterations
    assert loaded.residuals == solution.residuals
    assert loaded.clamp_count == solution.clamp_count

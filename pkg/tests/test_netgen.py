"""Network generator: tessellation, pruning, diameters, rescaling,
end-to-end invariants."""

import hashlib
import json
from dataclasses import replace

import numpy as np
import pytest

from capflow import GeneratorConfig, generate_network, solve_linear
from capflow.errors import DegenerateTessellation, GenerationFailed, \
    SchemaError
from capflow.fileio import write_graph
from capflow.netgen import (assign_diameters, config_from_file,
                            expected_point_count, remove_trifurcations,
                            rescale_to_sv, surface_to_volume,
                            tessellate_and_filter)

from conftest import make_graph


def graph_digest(graph, bc, tmp_path):
    path = tmp_path / "digest.json"
    write_graph(graph, bc, path)
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestTessellation:
    def test_cube_corners_nonempty_symmetric(self):
        points = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0)
                           for z in (0.0, 1.0)])
        coords, edges, _, _ = tessellate_and_filter(points)
        assert len(edges) > 0
        midpoints = (coords[edges[:, 0]] + coords[edges[:, 1]]) / 2.0
        assert np.max(np.abs(midpoints.mean(axis=0) - 0.5)) < 0.2

    def test_coplanar_rejected(self):
        rng = np.random.default_rng(0)
        points = rng.uniform(size=(20, 3))
        points[:, 2] = 0.5
        with pytest.raises(DegenerateTessellation, match="coplanar"):
            tessellate_and_filter(points)

    def test_too_few_points_rejected(self):
        with pytest.raises(DegenerateTessellation, match="at least 8"):
            tessellate_and_filter(np.random.default_rng(1).uniform(size=(5, 3)))

    def test_length_cutoff_enforced(self):
        """No surviving candidate exceeds the configured multiple of the
        median candidate length (stub edges excluded)."""
        rng = np.random.default_rng(7)
        points = rng.uniform(size=(40, 3))
        factor = 2.0
        unfiltered = tessellate_and_filter(points, length_filter_factor=1e9,
                                           min_edge_length=0.02)
        lengths0 = np.linalg.norm(
            unfiltered[0][unfiltered[1][:, 0]] -
            unfiltered[0][unfiltered[1][:, 1]], axis=1)
        stubs0 = set(unfiltered[2].tolist()) | set(unfiltered[3].tolist())
        interior0 = [l for (a, b), l in zip(unfiltered[1], lengths0)
                     if a not in stubs0 and b not in stubs0]
        cutoff = factor * np.median(interior0)

        coords, edges, in_stubs, out_stubs = tessellate_and_filter(
            points, length_filter_factor=factor, min_edge_length=0.02)
        stubs = set(in_stubs.tolist()) | set(out_stubs.tolist())
        for (a, b) in edges:
            if a in stubs or b in stubs:
                continue
            length = np.linalg.norm(coords[a] - coords[b])
            assert length <= cutoff * (1 + 1e-9)

    def test_stub_bands_widen_on_demand(self):
        rng = np.random.default_rng(3)
        points = rng.uniform(size=(30, 3))
        few = tessellate_and_filter(points, proximity=0.05)
        many = tessellate_and_filter(points, proximity=0.05,
                                     min_stub_candidates=(8, 8))
        assert len(many[2]) >= max(len(few[2]), 8)
        assert len(many[3]) >= max(len(few[3]), 8)


class TestTrifurcations:
    def test_four_star_resolved(self):
        graph = make_graph(
            [[0, 0, 0], [100, 0, 0], [-100, 0, 0], [0, 100, 0], [0, -90, 0]],
            [(0, 1), (0, 2), (0, 3), (0, 4)], [8.0, 8.0, 8.0, 8.0])
        fixed = remove_trifurcations(graph)
        assert fixed.degrees().max() <= 3
        assert fixed.n == graph.n + 1           # one auxiliary node
        assert fixed.is_weakly_connected()

    def test_compliant_graph_unchanged(self, symmetric_y):
        graph, _ = symmetric_y
        assert remove_trifurcations(graph) is graph

    def test_high_degree_random_star(self):
        rng = np.random.default_rng(5)
        n_spokes = 5
        coords = [[0.0, 0.0, 0.0]] + [
            (80 * np.array([np.cos(a), np.sin(a), 0.1])).tolist()
            for a in rng.uniform(0, 2 * np.pi, n_spokes)]
        edges = [(0, i + 1) for i in range(n_spokes)]
        graph = make_graph(coords, edges, np.full(n_spokes, 8.0))
        fixed = remove_trifurcations(graph)
        assert fixed.degrees().max() <= 3
        # connectivity oracle
        import scipy.sparse as sp
        adj = sp.coo_matrix(
            (np.ones(fixed.m), (fixed.edges[:, 0], fixed.edges[:, 1])),
            shape=(fixed.n, fixed.n))
        ncomp, _ = sp.csgraph.connected_components(adj, directed=False)
        assert ncomp == 1


class _ForcedUniform:
    """Generator stub whose uniform() always returns the upper bound."""

    def __init__(self, rng):
        self._rng = rng

    def uniform(self, low, high=None, size=None):
        if size is not None:
            return self._rng.uniform(low, high, size)
        return high if high is not None else low

    def __getattr__(self, name):
        return getattr(self._rng, name)


class TestDiameters:
    @staticmethod
    def _w_graph():
        """Inlet stub, bifurcation, two arms, confluence, outlet stub."""
        from capflow import BoundaryConditions
        coords = [[0, 0, 300], [0, 0, 200], [60, 0, 100], [-60, 0, 100],
                  [0, 0, 50], [0, 0, -50]]
        edges = [(0, 1), (1, 2), (1, 3), (2, 4), (3, 4), (4, 5)]
        graph = make_graph(coords, edges, np.full(6, 8.0))
        bc = BoundaryConditions(inlets=[0], outlets=[5],
                                inlet_pressures=[33.0],
                                outlet_pressures=[11.0])
        return graph, bc

    def test_confluence_combines_fourth_power(self):
        graph, bc = self._w_graph()
        config = GeneratorConfig(seed=1)
        diameters, records = assign_diameters(
            graph, bc, config, rng=np.random.default_rng(3),
            return_bifurcations=True)
        # inlet-adjacent edge carries the max diameter
        assert diameters[0] == config.diameter_bounds[1]
        # confluence at node 4: outflow edge 5 combines arms 3 and 4
        combined = (diameters[3] ** 4 + diameters[4] ** 4) ** 0.25
        expected = np.clip(combined, *config.diameter_bounds)
        assert diameters[5] == pytest.approx(expected, rel=1e-12)
        # the symmetric-branch identity: equal arms give 2^(1/4) * arm
        if abs(diameters[3] - diameters[4]) < 1e-12:
            assert diameters[5] == pytest.approx(
                min(2 ** 0.25 * diameters[3], config.diameter_bounds[1]),
                rel=1e-12)

    def test_bifurcation_clamp_path(self):
        """Forcing the sampled daughter to the parent bound pushes the
        second daughter to the minimum-diameter floor."""
        graph, bc = self._w_graph()
        config = GeneratorConfig(seed=1)
        rng = _ForcedUniform(np.random.default_rng(4))
        diameters, records = assign_diameters(graph, bc, config, rng=rng,
                                              return_bifurcations=True)
        bif = [r for r in records if r["node"] == 1]
        assert bif and bif[0]["clamped"]
        d1_edge, d2_edge = bif[0]["daughters"]
        assert diameters[d1_edge] == config.diameter_bounds[1]
        assert diameters[d2_edge] == config.diameter_bounds[0]

    def test_generated_unclamped_bifurcations_satisfy_rule(self):
        config = GeneratorConfig(seed=12)
        graph, bc = generate_network(config)
        diameters, records = assign_diameters(
            graph, bc, config, rng=np.random.default_rng(12),
            return_bifurcations=True)
        touches_inlet = set(np.flatnonzero(
            np.isin(graph.edges, bc.inlets).any(axis=1)).tolist())
        checked = 0
        for record in records:
            involved = {record["parent"], *record["daughters"]}
            if record["clamped"] or involved & touches_inlet:
                continue
            parent = diameters[record["parent"]] ** 4
            d1, d2 = (diameters[e] ** 4 for e in record["daughters"])
            assert abs(parent - d1 - d2) < 1e-9 * parent
            checked += 1
        assert checked > 0


class TestRescale:
    def test_fixed_point(self, generated_small):
        graph, _ = generated_small
        rescaled, scale = rescale_to_sv(graph, 7000.0)
        assert scale == pytest.approx(1.0, abs=1e-12)

    def test_inverse_square_scaling_law(self, generated_small):
        """S scales with L, V with L^3, so S/V goes as L^-2: doubling the
        geometry divides the ratio by four; rescaling restores the target."""
        graph, _ = generated_small
        base_ratio = surface_to_volume(graph)
        doubled = graph.with_geometry(graph.coordinates * 2.0,
                                      graph.lengths * 2.0)
        assert surface_to_volume(doubled) == pytest.approx(base_ratio / 4.0,
                                                           rel=1e-12)
        restored, _ = rescale_to_sv(doubled, 7000.0)
        assert surface_to_volume(restored) * 1e6 == pytest.approx(7000.0,
                                                                  rel=1e-10)

    def test_generated_network_hits_target(self, generated_small):
        graph, _ = generated_small
        ratio_per_m = surface_to_volume(graph) * 1e6
        assert abs(ratio_per_m - 7000.0) / 7000.0 < 0.01


class TestGenerate:
    def test_deterministic(self, tmp_path):
        config = GeneratorConfig(seed=33)
        a = generate_network(config)
        b = generate_network(config)
        assert graph_digest(*a, tmp_path) == graph_digest(*b, tmp_path)

    def test_seed_changes_output(self, tmp_path):
        a = generate_network(GeneratorConfig(seed=33))
        b = generate_network(GeneratorConfig(seed=34))
        assert graph_digest(*a, tmp_path) != graph_digest(*b, tmp_path)

    @pytest.mark.slow
    def test_population_invariants(self):
        """Degree bound, diameter bounds and outlet/inlet ratio over 100
        seeds; every tenth network is solved for feasibility."""
        ratios = []
        for seed in range(100):
            graph, bc = generate_network(GeneratorConfig(seed=seed))
            assert graph.degrees().max() <= 3
            lo, hi = GeneratorConfig().diameter_bounds
            assert graph.diameters.min() >= lo - 1e-12
            assert graph.diameters.max() <= hi + 1e-12
            bc.validate(graph, terminal_boundaries=True)
            ratios.append(len(bc.outlets) / len(bc.inlets))
            if seed % 10 == 0:
                solution = solve_linear(graph, bc)
                assert solution.residuals["constitutive_rel"] < 1e-8
        assert min(ratios) >= 1.5 and max(ratios) <= 2.5

    def test_failure_carries_stage(self):
        config = replace(GeneratorConfig(seed=1).scaled(0.25),
                         inlet_count_range=(40, 40), max_attempts=2)
        with pytest.raises(GenerationFailed) as excinfo:
            generate_network(config)
        assert excinfo.value.stage in ("boundaries", "tessellation",
                                       "pruning", "dijkstra")

    def test_config_file_round_trip(self, tmp_path):
        path = tmp_path / "gen.json"
        path.write_text(json.dumps({"seed": 5, "target_sv": 6500.0,
                                    "inlet_count_range": [4, 6]}))
        config = config_from_file(path)
        assert config.seed == 5 and config.target_sv == 6500.0
        assert config.inlet_count_range == (4, 6)
        path.write_text(json.dumps({"bogus": 1}))
        with pytest.raises(SchemaError, match="unknown config keys"):
            config_from_file(path)

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            GeneratorConfig(diameter_bounds=(12.0, 4.0))
        with pytest.raises(ValueError):
            GeneratorConfig(inlet_pressure_range=(10.0, 12.0),
                            outlet_pressure_range=(11.0, 15.0))

    def test_expected_point_count(self):
        assert expected_point_count(GeneratorConfig()) == 17

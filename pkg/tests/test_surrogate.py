"""Surrogate model: features, transform, forward contracts, checkpointing."""

import numpy as np
import pytest

from capflow import BoundaryConditions, GeneratorConfig, generate_network
from capflow.errors import VariantMismatch
from capflow.nn import tensor as T
from capflow.surrogate import (FeatureScales, Gnn, GnnConfig, build_features,
                               feature_scales_for, load_checkpoint,
                               save_checkpoint, velocity_transform,
                               velocity_transform_inv)
from capflow.surrogate.features import GraphFeatures
from capflow.surrogate.model import message_passing_step, _StoreShim

from conftest import make_graph

SMALL = GnnConfig(variant=3, latent_dim=6, message_steps=4, skip_period=2,
                  block_hidden_layers=1, seed=21)


class TestVelocityTransform:
    def test_zero(self):
        assert velocity_transform(0.0, 8.0, 5.0) == 0.0

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        q = rng.uniform(-1e6, 1e6, 500)
        d = rng.uniform(4.0, 12.0, 500)
        back = velocity_transform_inv(velocity_transform(q, d, 5.0), d, 5.0)
        assert np.max(np.abs(back - q)) <= 1e-9 * np.maximum(
            1.0, np.abs(q)).max()

    def test_odd_and_monotone(self):
        q = np.linspace(-1e5, 1e5, 4001)
        v = velocity_transform(q, 8.0, 5.0)
        assert np.allclose(v, -velocity_transform(-q, 8.0, 5.0),
                           rtol=0, atol=0)
        assert np.all(np.diff(v) > 0)
        assert np.all(np.sign(v) == np.sign(q))

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            velocity_transform(1.0, 8.0, 0.0)
        with pytest.raises(ValueError):
            velocity_transform_inv(1.0, -1.0, 5.0)


class TestFeatures:
    def test_interior_node_features(self, symmetric_y):
        graph, bc = symmetric_y
        scales = FeatureScales(pressure=35.0, diameter=12.0, length=120.0)
        feats = build_features(graph, bc, 1, scales)
        interior = feats.node[1]
        assert interior[0] == 0.0 and interior[1] == 0.0
        assert interior[2] == pytest.approx(33.0 / 35.0)
        assert interior[3] == pytest.approx(11.0 / 35.0)
        assert interior[4] == 0.0 and interior[5] == 0.0
        inlet = feats.node[0]
        assert inlet[0] == pytest.approx(33.0 / 35.0) and inlet[4] == 1.0

    def test_symmetrized_edge_count(self, symmetric_y):
        graph, bc = symmetric_y
        feats = build_features(graph, bc, 4,
                               FeatureScales(35.0, 12.0, 120.0))
        assert feats.edge.shape == (2 * graph.m, 3)
        assert np.array_equal(feats.edge[:graph.m], feats.edge[graph.m:])
        assert np.array_equal(feats.src[:graph.m], feats.tgt[graph.m:])

    def test_generated_features_normalized(self, generated_small):
        graph, bc = generated_small
        scales = feature_scales_for([(graph, bc)])
        feats = build_features(graph, bc, 4, scales)
        assert feats.node.min() >= 0.0 and feats.node.max() <= 1.0
        assert feats.edge.min() >= 0.0 and feats.edge.max() <= 1.0

    def test_adjacency_matches_symmetrized_lists(self, symmetric_y):
        graph, bc = symmetric_y
        feats = build_features(graph, bc, 1, FeatureScales(35, 12, 120))
        dense = np.zeros((graph.n, graph.n))
        for s, t in zip(feats.src, feats.tgt):
            dense[t, s] += 1.0
        assert np.array_equal(feats.adjacency.toarray(), dense)
        assert np.array_equal(feats.indegree.ravel(), dense.sum(axis=1))


class TestModelForward:
    def test_shape_contract(self):
        graph = make_graph([[0, 0, 0], [0, 0, 100], [0, 0, 200]],
                           [(0, 1), (1, 2)], [8.0, 8.0])
        bc = BoundaryConditions(inlets=[0], outlets=[2],
                                inlet_pressures=[30.0],
                                outlet_pressures=[10.0])
        gnn = Gnn(SMALL)
        pred = gnn.predict(graph, bc)
        assert pred["pressure"].shape == (3,)
        assert pred["velocity"].shape == (2,)

    def test_message_passing_step_shapes(self):
        graph = make_graph([[0, 0, 0], [0, 0, 100], [0, 0, 200]],
                           [(0, 1), (1, 2)], [8.0, 8.0])
        bc = BoundaryConditions(inlets=[0], outlets=[2],
                                inlet_pressures=[30.0],
                                outlet_pressures=[10.0])
        l = 8
        cfg = GnnConfig(variant=1, latent_dim=l, message_steps=2,
                        skip_period=1, block_hidden_layers=1, seed=2)
        gnn = Gnn(cfg)
        feats = build_features(graph, bc, 1, cfg.scales())
        v = T.Tensor(np.random.default_rng(0).standard_normal((3, l)))
        e = T.Tensor(np.random.default_rng(1).standard_normal((4, l)))
        v2, e2 = message_passing_step(gnn, feats, v, e)
        assert v2.data.shape == (3, l)
        assert e2.data.shape == (4, l)

    def test_empty_aggregation_convention(self):
        """A node with no incoming edges receives the zero message."""
        l = 4
        cfg = GnnConfig(variant=1, latent_dim=l, message_steps=1,
                        skip_period=1, block_hidden_layers=1, seed=5)
        gnn = Gnn(cfg)
        rng = np.random.default_rng(0)
        # deliberately malformed (unsymmetrized) lists: node 2 never a target
        feats = GraphFeatures(
            node=rng.standard_normal((3, 6)), edge=rng.standard_normal((2, 2)),
            src=np.array([2, 2]), tgt=np.array([0, 1]), n=3, m=2)
        v = T.Tensor(rng.standard_normal((3, l)))
        e = T.Tensor(rng.standard_normal((2, l)))
        v2, _ = message_passing_step(gnn, feats, v, e)

        shim = _StoreShim(gnn.store, False)
        blocks = gnn.steps[0]
        zero_message = blocks["message"].forward(
            shim, T.Tensor(np.zeros((1, 3 * l))))
        expected = blocks["update"].forward(
            shim, T.concat([T.Tensor(v.data[2:3]), zero_message]))
        assert np.allclose(v2.data[2], expected.data[0], rtol=0, atol=1e-14)

    def test_split_equals_canonical_forward(self, symmetric_y):
        """The optimized split-form forward must equal a plain concatenated
        reference implementation of the same architecture."""
        graph, bc = symmetric_y
        cfg = SMALL
        gnn = Gnn(cfg)
        feats = build_features(graph, bc, cfg.variant, cfg.scales())
        got = gnn.forward_features(feats)

        shim = _StoreShim(gnn.store, False)
        v = gnn.enc_v.forward(shim, T.Tensor(feats.node))
        e = gnn.enc_e.forward(shim, T.Tensor(feats.edge))
        v_hist, e_hist = [v], [e]
        k = cfg.skip_period
        for j in range(1, cfg.message_steps + 1):
            blocks = gnn.steps[j - 1]
            e_new = blocks["edge"].forward(
                shim, T.gather_concat(e, v, feats.src, feats.tgt))
            if j >= k:
                e_new = T.add(e_new, e_hist[j - k])
            pooled = T.scatter_rows(
                T.gather_concat(e_new, v, feats.src, feats.tgt),
                feats.tgt, feats.n)
            message = blocks["message"].forward(shim, pooled)
            v_new = blocks["update"].forward(shim, T.concat([v, message]))
            if j >= k:
                v_new = T.add(v_new, v_hist[j - k])
            v, e = v_new, e_new
            v_hist.append(v)
            e_hist.append(e)
        p_ref = gnn.dec_v.forward(shim, v).data
        assert np.max(np.abs(got["pressure_norm"].data - p_ref)) <= 1e-12

    def test_permutation_equivariance(self, generated_small):
        graph, bc = generated_small
        gnn = Gnn(SMALL)
        base = gnn.predict(graph, bc)

        rng = np.random.default_rng(9)
        perm = rng.permutation(graph.n)          # new index of old node i
        inv = np.empty_like(perm)
        inv[perm] = np.arange(graph.n)
        edge_perm = rng.permutation(graph.m)
        permuted = make_graph(graph.coordinates[inv],
                              perm[graph.edges][edge_perm],
                              graph.diameters[edge_perm],
                              lengths=graph.lengths[edge_perm])
        bc_perm = BoundaryConditions(
            inlets=perm[bc.inlets], outlets=perm[bc.outlets],
            inlet_pressures=bc.inlet_pressures,
            outlet_pressures=bc.outlet_pressures,
            inlet_hematocrit=bc.inlet_hematocrit)
        out = gnn.predict(permuted, bc_perm)
        assert np.max(np.abs(out["pressure"][perm] - base["pressure"])) \
            <= 1e-10
        assert np.max(np.abs(out["velocity"] -
                             base["velocity"][edge_perm])) <= 1e-10

    def test_skip_telescoping_identity(self, symmetric_y):
        """With all processor blocks zeroed the latents reproduce the
        encodings exactly at multiples of the skip period."""
        graph, bc = symmetric_y
        for steps in (4, 6):
            cfg = GnnConfig(variant=1, latent_dim=5, message_steps=steps,
                            skip_period=2, block_hidden_layers=1, seed=3)
            gnn = Gnn(cfg)
            for name in gnn.store.names():
                if name.startswith("step"):
                    gnn.store.view(name)[:] = 0.0
            feats = build_features(graph, bc, 1, cfg.scales())
            _, v_hist, e_hist = gnn.forward_features(feats,
                                                     collect_latents=True)
            shim = _StoreShim(gnn.store, False)
            e0 = gnn.enc_e.forward(shim, T.Tensor(feats.edge)).data
            v0 = gnn.enc_v.forward(shim, T.Tensor(feats.node)).data
            for j in range(1, steps + 1):
                if j % cfg.skip_period == 0:
                    assert np.array_equal(e_hist[j].data, e0)
                    assert np.array_equal(v_hist[j].data, v0)
                else:
                    assert np.max(np.abs(e_hist[j].data)) == 0.0

    def test_deterministic_predictions(self, symmetric_y):
        graph, bc = symmetric_y
        gnn = Gnn(SMALL)
        a = gnn.predict(graph, bc)
        b = gnn.predict(graph, bc)
        assert np.array_equal(a["pressure"], b["pressure"])
        assert np.array_equal(a["velocity"], b["velocity"])

    def test_variant_output_gate(self):
        gnn = Gnn(GnnConfig(variant=1, latent_dim=4, message_steps=2,
                            skip_period=1, block_hidden_layers=1))
        with pytest.raises(VariantMismatch):
            gnn.require_outputs(["velocity"])

    def test_weight_tying_shares_parameters(self):
        tied = Gnn(GnnConfig(variant=1, latent_dim=4, message_steps=5,
                             skip_period=2, block_hidden_layers=1,
                             weight_tying=True))
        untied = Gnn(GnnConfig(variant=1, latent_dim=4, message_steps=5,
                               skip_period=2, block_hidden_layers=1))
        assert tied.parameter_count < untied.parameter_count
        assert len(tied.steps) == 1


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path, symmetric_y):
        graph, bc = symmetric_y
        gnn = Gnn(SMALL)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(gnn, path, metadata={"note": "unit"})
        loaded, metadata = load_checkpoint(path)
        assert metadata == {"note": "unit"}
        assert loaded.config == gnn.config
        assert np.array_equal(loaded.store.values, gnn.store.values)
        a = gnn.predict(graph, bc)
        b = loaded.predict(graph, bc)
        assert np.array_equal(a["pressure"], b["pressure"])

    def test_missing_parameter_rejected(self, tmp_path):
        import numpy as np
        gnn = Gnn(SMALL)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(gnn, path)
        with np.load(path) as archive:
            entries = {k: archive[k] for k in archive.files}
        first_param = [k for k in entries if k.startswith("param::")][0]
        del entries[first_param]
        np.savez(tmp_path / "broken.npz", **entries)
        from capflow.errors import SchemaError
        with pytest.raises(SchemaError):
            load_checkpoint(tmp_path / "broken.npz")

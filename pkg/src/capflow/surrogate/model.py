"""Encoder-processor-decoder graph network.

Node and edge states of width ``latent_dim`` evolve jointly for
``message_steps`` rounds: the edge update feeds each edge's state and its
endpoint states through an MLP; the node update aggregates (sums) the
updated edge states concatenated with endpoint states over all incoming
edges, transforms the pooled message, and combines it with the node's own
state. Residual (skip) additions reuse the state from ``skip_period``
steps earlier at every step past the first ``skip_period``. Each step
owns its weights unless ``weight_tying`` is set.

Variants: 1 decodes pressure only; 2 and 3 add transformed velocity; 4
adds hematocrit. Edge quantities are decoded from the forward companion
of each undirected edge pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from ..errors import VariantMismatch
from ..graph import BoundaryConditions, VascularGraph
from ..nn import tensor as T
from ..nn.mlp import Mlp, ParamStore, glorot_init
from .features import (FeatureScales, GraphFeatures, NODE_FEATURE_DIM,
                       build_features, edge_feature_dim)

VARIANT_OUTPUTS = {1: ("pressure",),
                   2: ("pressure", "velocity"),
                   3: ("pressure", "velocity"),
                   4: ("pressure", "velocity", "hematocrit")}


@dataclass(frozen=True)
class GnnConfig:
    """Architecture and normalization constants of a surrogate model."""

    variant: int = 1
    latent_dim: int = 16
    message_steps: int = 30
    skip_period: int = 3
    block_hidden_layers: int = 7
    k_v: float = 5.0
    pressure_scale: float = 35.0
    diameter_scale: float = 12.0
    length_scale: float = 100.0
    weight_tying: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANT_OUTPUTS:
            raise ValueError(f"unknown variant {self.variant}")
        if self.skip_period < 1 or self.skip_period > self.message_steps:
            raise ValueError("require 1 <= skip_period <= message_steps")
        if self.latent_dim < 1 or self.message_steps < 1:
            raise ValueError("latent_dim and message_steps must be positive")
        if self.block_hidden_layers < 1:
            raise ValueError("need at least one hidden layer per block")
        if min(self.k_v, self.pressure_scale, self.diameter_scale,
               self.length_scale) <= 0:
            raise ValueError("scales and k_v must be positive")

    @property
    def outputs(self):
        return VARIANT_OUTPUTS[self.variant]

    @property
    def edge_output_dim(self) -> int:
        return len(self.outputs) - 1

    def scales(self) -> FeatureScales:
        return FeatureScales(pressure=self.pressure_scale,
                             diameter=self.diameter_scale,
                             length=self.length_scale)


class Gnn:
    """A surrogate model instance: config + parameter store."""

    def __init__(self, config: GnnConfig):
        self.config = config
        store = ParamStore()
        l = config.latent_dim
        self.enc_v = Mlp.build(store, "enc_v", [NODE_FEATURE_DIM, l, l])
        self.enc_e = Mlp.build(store, "enc_e",
                               [edge_feature_dim(config.variant), l, l])
        step_count = 1 if config.weight_tying else config.message_steps
        u_dims = [2 * l] + [l] * config.block_hidden_layers + [l]
        self.steps = []
        for j in range(step_count):
            self.steps.append({
                "edge": Mlp.build(store, f"step{j}.edge", [3 * l, l, l]),
                "message": Mlp.build(store, f"step{j}.message", [3 * l, l, l]),
                "update": Mlp.build(store, f"step{j}.update", u_dims),
            })
        self.dec_v = Mlp.build(store, "dec_v", [l, l, 1])
        self.dec_e = None
        if config.edge_output_dim:
            self.dec_e = Mlp.build(store, "dec_e",
                                   [l, l, config.edge_output_dim])
        store.finalize()
        glorot_init(store, np.random.default_rng(config.seed))
        self.store = store

    @property
    def parameter_count(self) -> int:
        return self.store.size

    def _step_blocks(self, j: int):
        return self.steps[0 if self.config.weight_tying else j]

    def forward_features(self, feats: GraphFeatures, trainable: bool = False,
                         collect_latents: bool = False):
        """Run the network on prebuilt features.

        Returns normalized-unit predictions as tensors: ``pressure_norm``
        (n, 1) plus, per variant, ``velocity`` (m, 1) and ``hematocrit``
        (m, 1). With ``trainable`` the tape records for backward.

        The first (3l -> l) layers of the edge and message blocks are
        evaluated in split form, e @ Wa + v[src] @ Wb + v[tgt] @ Wc, so no
        (edges, 3l) concatenation is ever materialized; the summed
        aggregation likewise reduces to a scatter of edge states plus
        adjacency/degree pooling of node states. This is algebraically
        identical to the concatenated formulation (checked in tests).
        """
        cfg = self.config
        l = cfg.latent_dim
        shim = _StoreShim(self.store, trainable)

        v = self.enc_v.forward(shim, T.Tensor(feats.node))
        e = self.enc_e.forward(shim, T.Tensor(feats.edge))
        v_hist, e_hist = [v], [e]
        k = cfg.skip_period
        indeg = feats.indegree
        for j in range(1, cfg.message_steps + 1):
            blocks = self._step_blocks(j - 1)

            edge_mlp = blocks["edge"]
            w1 = shim.leaf(edge_mlp.weight_names[0])
            b1 = shim.leaf(edge_mlp.bias_names[0])
            hidden = T.fused_edge_input(
                e, T.slice_rows(w1, 0, l), b1,
                T.matmul(v, T.slice_rows(w1, l, 2 * l)),
                T.matmul(v, T.slice_rows(w1, 2 * l, 3 * l)),
                feats.src, feats.tgt)
            e_new = _mlp_tail(shim, edge_mlp, T.gelu(hidden))
            if j >= k:
                e_new = T.add(e_new, e_hist[j - k])

            msg_mlp = blocks["message"]
            wm = shim.leaf(msg_mlp.weight_names[0])
            m_in = T.linear(T.scatter_rows(e_new, feats.tgt, feats.n),
                            T.slice_rows(wm, 0, l),
                            shim.leaf(msg_mlp.bias_names[0]))
            m_in = T.add(m_in, T.matmul(T.spmm(feats.adjacency, v),
                                        T.slice_rows(wm, l, 2 * l)))
            m_in = T.add(m_in, T.matmul(T.mul(v, indeg),
                                        T.slice_rows(wm, 2 * l, 3 * l)))
            message = _mlp_tail(shim, msg_mlp, T.gelu(m_in))

            upd_mlp = blocks["update"]
            wu = shim.leaf(upd_mlp.weight_names[0])
            u_in = T.linear(v, T.slice_rows(wu, 0, l),
                            shim.leaf(upd_mlp.bias_names[0]))
            u_in = T.add(u_in, T.matmul(message,
                                        T.slice_rows(wu, l, 2 * l)))
            v_new = _mlp_tail(shim, upd_mlp, T.gelu(u_in))
            if j >= k:
                v_new = T.add(v_new, v_hist[j - k])

            v, e = v_new, e_new
            v_hist.append(v)
            e_hist.append(e)

        out = {"pressure_norm": self.dec_v.forward(shim, v)}
        if self.dec_e is not None:
            edge_out = self.dec_e.forward(shim, T.slice_rows(e, 0, feats.m))
            out["velocity"] = _column(edge_out, 0)
            if cfg.edge_output_dim == 2:
                out["hematocrit"] = _column(edge_out, 1)
        if collect_latents:
            return out, v_hist, e_hist
        return out

    def predict(self, graph: VascularGraph, bc: BoundaryConditions
                ) -> Dict[str, np.ndarray]:
        """Physical-unit predictions on a graph: pressures in mmHg plus,
        per variant, transformed velocities and hematocrits."""
        feats = build_features(graph, bc, self.config.variant,
                               self.config.scales())
        with T.single_thread_blas(), T.finite_guard():
            raw = self.forward_features(feats, trainable=False)
        out = {"pressure":
               raw["pressure_norm"].data.ravel() * self.config.pressure_scale}
        if "velocity" in raw:
            out["velocity"] = raw["velocity"].data.ravel()
        if "hematocrit" in raw:
            out["hematocrit"] = raw["hematocrit"].data.ravel()
        return out

    def require_outputs(self, names) -> None:
        missing = [n for n in names if n not in self.config.outputs]
        if missing:
            raise VariantMismatch(
                f"variant {self.config.variant} does not predict {missing}")

    def predict_solution(self, graph: VascularGraph, bc: BoundaryConditions):
        """Predictions packaged like a solver result (flows recovered from
        the transformed velocities); requires a velocity-predicting
        variant. Export with ``fileio.write_solution(..., source="gnn")``.
        """
        from ..rheology import velocity_from_flow
        from ..solution import FlowSolution
        from .transform import velocity_transform_inv
        self.require_outputs(["pressure", "velocity"])
        pred = self.predict(graph, bc)
        flows = velocity_transform_inv(pred["velocity"], graph.diameters,
                                       self.config.k_v)
        return FlowSolution(
            pressures=pred["pressure"],
            flows=flows,
            velocities=velocity_from_flow(flows, graph.diameters),
            hematocrits=pred.get("hematocrit"),
            node_potentials=(np.zeros(graph.n)
                             if "hematocrit" in pred else None),
            residuals={}, iterations=0, converged=True)


class _StoreShim:
    """Adapter handing Mlp.forward trainable or frozen parameter leaves.

    Leaves are cached per forward pass: reusing one tensor per parameter
    keeps the tape small and accumulates gradients correctly (a node may
    have many consumers).
    """

    def __init__(self, store: ParamStore, trainable: bool):
        self._store = store
        self._trainable = trainable
        self._cache: Dict[str, T.Tensor] = {}

    def leaf(self, name: str) -> T.Tensor:
        tensor = self._cache.get(name)
        if tensor is None:
            if self._trainable:
                tensor = self._store.leaf(name)
            else:
                tensor = T.Tensor(self._store.view(name))
            self._cache[name] = tensor
        return tensor


def _mlp_tail(shim: _StoreShim, mlp, x: T.Tensor) -> T.Tensor:
    """Apply an MLP's layers after its first (already-applied) affine map;
    ``x`` is the post-GELU hidden state of layer 0."""
    last = len(mlp.weight_names) - 1
    for idx in range(1, len(mlp.weight_names)):
        x = T.linear(x, shim.leaf(mlp.weight_names[idx]),
                     shim.leaf(mlp.bias_names[idx]))
        if idx < last:
            x = T.gelu(x)
    return x


def _column(x: T.Tensor, col: int) -> T.Tensor:
    """Single column of a 2-D tensor as an (N, 1) tensor."""
    width = x.data.shape[1]
    sel = np.zeros((width, 1))
    sel[col, 0] = 1.0
    return T.matmul(x, T.Tensor(sel))


def message_passing_step(gnn: Gnn, feats: GraphFeatures, v: T.Tensor,
                         e: T.Tensor, step_index: int = 0):
    """One bare update round (no skips), exposed for contract tests."""
    blocks = gnn._step_blocks(step_index)
    shim = _StoreShim(gnn.store, False)
    e_new = blocks["edge"].forward(
        shim, T.gather_concat(e, v, feats.src, feats.tgt))
    pooled = T.scatter_rows(T.gather_concat(e_new, v, feats.src, feats.tgt),
                            feats.tgt, feats.n)
    v_new = blocks["update"].forward(
        shim, T.concat([v, blocks["message"].forward(shim, pooled)]))
    return v_new, e_new

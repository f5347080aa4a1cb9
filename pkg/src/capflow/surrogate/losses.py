"""Training losses for the four surrogate variants and evaluation metrics.

All data terms operate in normalized units (pressures divided by the
pressure scale, velocities in transformed units, hematocrit raw).
Physics terms rebuild the flow residuals from predictions: the
constitutive defect (pressure drop minus resistance times recovered
flow, in mmHg) per edge, and the interior-node divergence of recovered
flow in um^3/s (optionally hematocrit-weighted). Each residual is divided
by its normalization constant (``c_pressure`` = 35 mmHg, ``c_mass`` =
1e6) inside the squared norm, which renders the physics terms
dimensionless and commensurate with the O(1) data terms; only then do
the published mixing weights (delta, gamma families) balance the two
sides as intended.

Flow recovery through the inverse velocity transform grows exponentially
in the transformed value; beyond ``TV_LINEARIZATION_CAP`` (far outside
the physical velocity range) it continues with a first-order (C^1)
extension so early-training outliers produce bounded gradients instead
of overflow.

Per-graph quantities only: the training loop averages across graphs,
which matches batch-size-1 optimization of the dataset-mean loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..errors import VariantMismatch
from ..graph import BoundaryConditions, VascularGraph, classify_nodes
from ..rheology import (CP_PER_S_TO_MMHG, RheologyParams,
                        relative_apparent_viscosity,
                        viscosity_shape_exponent)
from ..nn import tensor as T
from .transform import velocity_transform
from ..rheology import edge_resistance


@dataclass(frozen=True)
class LossWeights:
    """Mixing coefficients and normalization constants of the composite
    losses (defaults follow the published configurations)."""

    delta: float = 0.5
    gamma_d: float = 0.9
    gamma_p: float = 0.5
    gamma_d1: float = 0.75
    gamma_d2: float = 0.75
    gamma_p1: float = 0.75
    gamma_p2: float = 0.75
    alpha_pressure: float = 1.0
    beta_velocity: float = 1.0
    beta_hematocrit: float = 1.0
    c_pressure: float = 35.0
    c_mass: float = 1e6

    def __post_init__(self):
        for name in ("delta", "gamma_d", "gamma_p"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for pair in (("gamma_d1", "gamma_d2"), ("gamma_p1", "gamma_p2")):
            a, b = (getattr(self, n) for n in pair)
            if not (-1.0 <= a <= 1.0 and -1.0 <= b <= 1.0 and a + b >= 0.0):
                raise ValueError(f"{pair}: values in [-1, 1] with sum >= 0")
        if self.c_pressure <= 0 or self.c_mass <= 0:
            raise ValueError("normalization constants must be positive")


@dataclass(frozen=True)
class GraphSystem:
    """Per-graph constants the physics losses need (built once per graph)."""

    src: np.ndarray
    tgt: np.ndarray
    interior_mask: np.ndarray       # (n,) 1.0 at interior nodes
    resistance_const: np.ndarray    # constant-viscosity resistances
    diameters: np.ndarray
    lengths: np.ndarray
    areas: np.ndarray               # pi D^2 / 4
    n: int
    m: int
    mu_plasma: float
    hematocrit_clamp: float = 0.95

    @staticmethod
    def for_graph(graph: VascularGraph, bc: BoundaryConditions,
                  params: Optional[RheologyParams] = None,
                  hematocrit_clamp: float = 0.95) -> "GraphSystem":
        params = params or RheologyParams()
        classes = classify_nodes(graph, bc)
        mask = (classes.labels == classes.INTERIOR).astype(np.float64)
        return GraphSystem(
            src=graph.edges[:, 0].copy(), tgt=graph.edges[:, 1].copy(),
            interior_mask=mask,
            resistance_const=edge_resistance(graph.diameters, graph.lengths,
                                             params.mu),
            diameters=graph.diameters.copy(), lengths=graph.lengths.copy(),
            areas=np.pi * graph.diameters ** 2 / 4.0,
            n=graph.n, m=graph.m, mu_plasma=params.mu_plasma,
            hematocrit_clamp=hematocrit_clamp)


@dataclass(frozen=True)
class GraphTargets:
    """Full-order reference fields in loss units."""

    pressure_norm: np.ndarray                 # (n, 1)
    velocity: Optional[np.ndarray] = None     # (m, 1) transformed
    hematocrit: Optional[np.ndarray] = None   # (m, 1)

    @staticmethod
    def from_solution(solution, graph: VascularGraph, pressure_scale: float,
                      k_v: float) -> "GraphTargets":
        v = velocity_transform(solution.flows, graph.diameters, k_v)
        h = None
        if solution.hematocrits is not None:
            h = solution.hematocrits.reshape(-1, 1)
        return GraphTargets(
            pressure_norm=(solution.pressures / pressure_scale).reshape(-1, 1),
            velocity=v.reshape(-1, 1),
            hematocrit=h)


# -- differentiable physics primitives ---------------------------------------

TV_LINEARIZATION_CAP = 4.0


def tv_inverse_op(v: T.Tensor, areas: np.ndarray, k_v: float) -> T.Tensor:
    """Differentiable inverse velocity transform (flow recovery).

    Exact inside |v| <= TV_LINEARIZATION_CAP (which covers every physical
    velocity by orders of magnitude); beyond the cap the map continues
    linearly with matched value and slope, keeping gradients finite for
    wild early-training predictions.
    """
    data = v.data
    mag = np.abs(data)
    capped = np.minimum(mag, TV_LINEARIZATION_CAP)
    exp_term = np.exp(k_v * capped)
    inner = exp_term - 1.0
    tail = np.maximum(mag - TV_LINEARIZATION_CAP, 0.0)
    out = np.sign(data) * areas * (inner + tail * k_v * exp_term)

    def bw(g):
        # slope is A*k*exp(k*capped) on both branches (C^1 extension)
        v._accumulate(g * areas * k_v * exp_term)
    return T.apply_op(out, (v,), bw)


def pries_resistance_op(h: T.Tensor, system: GraphSystem) -> T.Tensor:
    """Differentiable hematocrit-dependent Poiseuille resistance.

    Hematocrit is clamped to [0, clamp] inside (zero gradient outside),
    keeping the viscosity law in its admissible domain for arbitrary
    network outputs.
    """
    d, length = system.diameters, system.lengths
    mu45 = relative_apparent_viscosity(d).reshape(-1, 1)
    gamma = viscosity_shape_exponent(d).reshape(-1, 1)
    denom = (1.0 - 0.45) ** gamma - 1.0
    geometry = (128.0 * length / (np.pi * d ** 4) *
                CP_PER_S_TO_MMHG).reshape(-1, 1)

    data = h.data
    clamped = np.clip(data, 0.0, system.hematocrit_clamp)
    gate = ((data > 0.0) & (data < system.hematocrit_clamp)).astype(np.float64)
    base = (1.0 - clamped) ** gamma
    mu = system.mu_plasma * (1.0 + (mu45 - 1.0) * (base - 1.0) / denom)
    out = geometry * mu

    def bw(g):
        dmu = system.mu_plasma * (mu45 - 1.0) / denom * \
            (-gamma * (1.0 - clamped) ** (gamma - 1.0))
        h._accumulate(g * geometry * dmu * gate)
    return T.apply_op(out, (h,), bw)


def _flow_from_velocity(pred_velocity: T.Tensor, system: GraphSystem,
                        k_v: float) -> T.Tensor:
    return tv_inverse_op(pred_velocity, system.areas.reshape(-1, 1), k_v)


def constitutive_loss(pred: Dict[str, T.Tensor], system: GraphSystem,
                      weights: LossWeights, k_v: float,
                      nonlinear: bool) -> T.Tensor:
    """Mean squared constitutive defect over edges, with the defect
    expressed in units of ``c_pressure``."""
    p_mmhg = T.mul(pred["pressure_norm"], weights.c_pressure)
    drop = T.add(T.gather_rows(p_mmhg, system.src),
                 T.mul(T.gather_rows(p_mmhg, system.tgt), -1.0))
    flow = _flow_from_velocity(pred["velocity"], system, k_v)
    if nonlinear:
        resistance = pries_resistance_op(pred["hematocrit"], system)
        r_q = T.mul(resistance, flow)
    else:
        r_q = T.mul(flow, system.resistance_const.reshape(-1, 1))
    defect = T.mul(T.add(drop, T.mul(r_q, -1.0)), 1.0 / weights.c_pressure)
    return T.mul(T.sum_squares(defect), 1.0 / system.m)


def mass_loss(pred: Dict[str, T.Tensor], system: GraphSystem,
              weights: LossWeights, k_v: float,
              hematocrit_weighted: bool = False) -> T.Tensor:
    """Mean squared interior divergence of the recovered flow (optionally
    weighted by predicted hematocrit), in units of ``c_mass``."""
    flow = _flow_from_velocity(pred["velocity"], system, k_v)
    if hematocrit_weighted:
        flow = T.mul(flow, pred["hematocrit"])
    inflow = T.scatter_rows(flow, system.tgt, system.n)
    outflow = T.scatter_rows(flow, system.src, system.n)
    divergence = T.add(inflow, T.mul(outflow, -1.0))
    interior = T.mul(divergence,
                     system.interior_mask.reshape(-1, 1) / weights.c_mass)
    return T.mul(T.sum_squares(interior), 1.0 / system.n)


# -- data terms ---------------------------------------------------------------

def pressure_data_loss(pred, targets) -> T.Tensor:
    diff = T.add(pred["pressure_norm"], -targets.pressure_norm)
    return T.mul(T.sum_squares(diff), 1.0 / diff.data.shape[0])


def velocity_data_loss(pred, targets) -> T.Tensor:
    diff = T.add(pred["velocity"], -targets.velocity)
    return T.mul(T.sum_squares(diff), 1.0 / diff.data.shape[0])


def hematocrit_data_loss(pred, targets) -> T.Tensor:
    diff = T.add(pred["hematocrit"], -targets.hematocrit)
    return T.mul(T.sum_squares(diff), 1.0 / diff.data.shape[0])


# -- variant losses -----------------------------------------------------------

def loss_variant1(pred, targets, weights: LossWeights) -> T.Tensor:
    return T.mul(pressure_data_loss(pred, targets), weights.alpha_pressure)


def loss_variant2(pred, targets, weights: LossWeights) -> T.Tensor:
    lp = T.mul(pressure_data_loss(pred, targets), weights.alpha_pressure)
    lv = T.mul(velocity_data_loss(pred, targets), weights.beta_velocity)
    return T.add(T.mul(lp, weights.gamma_d), T.mul(lv, 1.0 - weights.gamma_d))


def loss_variant3(pred, targets, system: GraphSystem, weights: LossWeights,
                  k_v: float) -> T.Tensor:
    data = loss_variant2(pred, targets, weights)
    physics = T.add(
        T.mul(constitutive_loss(pred, system, weights, k_v, nonlinear=False),
              weights.gamma_p),
        T.mul(mass_loss(pred, system, weights, k_v), 1.0 - weights.gamma_p))
    return T.add(T.mul(data, weights.delta),
                 T.mul(physics, 1.0 - weights.delta))


def loss_variant4(pred, targets, system: GraphSystem, weights: LossWeights,
                  k_v: float) -> T.Tensor:
    lp = T.mul(pressure_data_loss(pred, targets), weights.alpha_pressure)
    lv = T.mul(velocity_data_loss(pred, targets), weights.beta_velocity)
    lh = T.mul(hematocrit_data_loss(pred, targets), weights.beta_hematocrit)
    data = T.add(
        T.add(T.mul(lp, 0.5 * (weights.gamma_d1 + weights.gamma_d2)),
              T.mul(lv, 0.5 * (1.0 - weights.gamma_d1))),
        T.mul(lh, 0.5 * (1.0 - weights.gamma_d2)))
    physics = T.add(
        T.add(T.mul(constitutive_loss(pred, system, weights, k_v,
                                      nonlinear=True),
                    0.5 * (weights.gamma_p1 + weights.gamma_p2)),
              T.mul(mass_loss(pred, system, weights, k_v),
                    0.5 * (1.0 - weights.gamma_p1))),
        T.mul(mass_loss(pred, system, weights, k_v, hematocrit_weighted=True),
              0.5 * (1.0 - weights.gamma_p2)))
    return T.add(T.mul(data, weights.delta),
                 T.mul(physics, 1.0 - weights.delta))


def variant_loss(variant: int, pred, targets, system: GraphSystem,
                 weights: LossWeights, k_v: float) -> T.Tensor:
    if variant == 1:
        return loss_variant1(pred, targets, weights)
    if variant == 2:
        return loss_variant2(pred, targets, weights)
    if variant == 3:
        return loss_variant3(pred, targets, system, weights, k_v)
    if variant == 4:
        return loss_variant4(pred, targets, system, weights, k_v)
    raise VariantMismatch(f"unknown variant {variant}")


# -- evaluation metrics -------------------------------------------------------

def relative_error(pred: np.ndarray, truth: np.ndarray, norm: str = "L2"
                   ) -> float:
    """Relative L1/L2 error of a prediction against the reference, in %."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ValueError("prediction/reference shape mismatch")
    if norm == "L2":
        denom = np.linalg.norm(truth)
        return float(np.linalg.norm(pred - truth) / denom * 100.0)
    if norm == "L1":
        denom = np.sum(np.abs(truth))
        return float(np.sum(np.abs(pred - truth)) / denom * 100.0)
    raise ValueError(f"unknown norm {norm!r}")

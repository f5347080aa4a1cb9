"""Training loop: graph-level batching, plateau learning-rate decay, early
stopping, best-validation checkpointing.

The schedule: learning rate starts at ``learning_rate`` and is divided by
10 whenever the validation loss fails to improve for ``plateau_patience``
consecutive epochs; training stops early after ``early_stop_patience``
stagnant epochs (or at ``max_epochs``). The returned model carries the
parameters of the best validation epoch. The whole run is a deterministic
function of (dataset, configs, seed).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import NonFiniteLoss, SchemaError, VariantMismatch
from ..nn import tensor as T
from ..nn.adam import Adam
from ..rheology import RheologyParams
from ..surrogate.features import build_features
from ..surrogate.losses import (GraphSystem, GraphTargets, LossWeights,
                                variant_loss)
from ..surrogate.model import Gnn, GnnConfig
from .dataset import DatasetManifest

VARIANT_RHEOLOGY = {1: "linear", 2: "linear", 3: "linear", 4: "nonlinear"}


def variant_weights(variant: int) -> LossWeights:
    """Published loss-hyperparameter defaults per model variant."""
    if variant == 2:
        return LossWeights(gamma_d=0.5)
    if variant == 3:
        return LossWeights(delta=0.5, gamma_d=0.9, gamma_p=0.5)
    if variant == 4:
        return LossWeights(delta=0.5, gamma_d1=0.75, gamma_d2=0.75,
                           gamma_p1=0.75, gamma_p2=0.75)
    return LossWeights()


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    plateau_patience: int = 10
    lr_decay: float = 0.1
    early_stop_patience: int = 25
    max_epochs: int = 500
    batch_size: int = 1
    seed: int = 0
    weights: Optional[LossWeights] = None    # None: variant defaults

    def __post_init__(self):
        if self.batch_size != 1:
            raise ValueError("graph-level batching: batch_size must be 1")
        if self.max_epochs < 0 or self.learning_rate <= 0:
            raise ValueError("bad training configuration")


@dataclass
class TrainingLog:
    epochs: List[dict] = field(default_factory=list)
    events: List[dict] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "events": self.events,
                "stop_reason": self.stop_reason, "best_epoch": self.best_epoch,
                "best_val_loss": self.best_val_loss,
                "wall_time_s": self.wall_time_s}

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "training_log.json").write_text(
            json.dumps(self.to_dict(), indent=1))
        with open(directory / "training_log.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss",
                             "learning_rate"])
            for row in self.epochs:
                writer.writerow([row["epoch"], row["train_loss"],
                                 row["val_loss"], row["learning_rate"]])


class _PreparedGraph:
    """Features/targets/system built once and reused every epoch."""

    __slots__ = ("features", "targets", "system", "entry_id")

    def __init__(self, entry_id, features, targets, system):
        self.entry_id = entry_id
        self.features = features
        self.targets = targets
        self.system = system


def prepare_graphs(manifest: DatasetManifest, split: str, config: GnnConfig,
                   params: Optional[RheologyParams] = None
                   ) -> List[_PreparedGraph]:
    rheology = VARIANT_RHEOLOGY[config.variant]
    prepared = []
    for entry in manifest.split(split):
        if rheology not in entry.solutions:
            raise VariantMismatch(
                f"variant {config.variant} needs {rheology} solutions; "
                f"entry {entry.id} lacks one")
        graph, bc, solution = manifest.load(entry, rheology)
        feats = build_features(graph, bc, config.variant, config.scales())
        targets = GraphTargets.from_solution(solution, graph,
                                             config.pressure_scale, config.k_v)
        system = GraphSystem.for_graph(graph, bc, params)
        prepared.append(_PreparedGraph(entry.id, feats, targets, system))
    return prepared


def _mean_loss(gnn: Gnn, graphs: List[_PreparedGraph],
               weights: LossWeights) -> float:
    total = 0.0
    with T.single_thread_blas():
        for g in graphs:
            out = gnn.forward_features(g.features, trainable=False)
            loss = variant_loss(gnn.config.variant, out, g.targets, g.system,
                                weights, gnn.config.k_v)
            total += float(loss.data)
    return total / max(len(graphs), 1)


def train(manifest: DatasetManifest, train_config: TrainConfig,
          gnn_config: GnnConfig, out_dir=None
          ) -> Tuple[Gnn, TrainingLog]:
    """Train one surrogate variant on a dataset manifest.

    Returns the best-validation model and the log. ``out_dir`` (optional)
    receives the checkpoint and log files.
    """
    started = time.time()
    weights = train_config.weights or variant_weights(gnn_config.variant)
    gnn = Gnn(gnn_config)
    train_graphs = prepare_graphs(manifest, "train", gnn_config)
    val_graphs = prepare_graphs(manifest, "val", gnn_config)
    if not train_graphs or not val_graphs:
        raise SchemaError("manifest needs nonempty train and val splits")

    log = TrainingLog()
    adam = Adam(learning_rate=train_config.learning_rate)
    rng = np.random.default_rng(train_config.seed)
    best_params = gnn.store.values.copy()
    stagnant = 0
    plateau = 0

    if train_config.max_epochs == 0:
        log.stop_reason = "no training requested (max_epochs=0)"
        log.wall_time_s = time.time() - started
        _finalize(gnn, best_params, log, out_dir)
        return gnn, log

    for epoch in range(1, train_config.max_epochs + 1):
        order = rng.permutation(len(train_graphs))
        train_total = 0.0
        with T.single_thread_blas():
            for idx in order:
                g = train_graphs[idx]
                gnn.store.zero_grad()
                try:
                    with T.finite_guard():
                        out = gnn.forward_features(g.features, trainable=True)
                        loss = variant_loss(gnn.config.variant, out,
                                            g.targets, g.system, weights,
                                            gnn.config.k_v)
                        T.backward(loss)
                        adam.step(gnn.store.values, gnn.store.grads)
                except FloatingPointError as exc:
                    raise NonFiniteLoss(
                        f"non-finite loss at epoch {epoch}, graph "
                        f"{g.entry_id}: {exc}") from exc
                train_total += float(loss.data)

        val_loss = _mean_loss(gnn, val_graphs, weights)
        log.epochs.append({
            "epoch": epoch,
            "train_loss": train_total / len(train_graphs),
            "val_loss": val_loss,
            "learning_rate": adam.learning_rate,
        })

        if val_loss < log.best_val_loss:
            log.best_val_loss = val_loss
            log.best_epoch = epoch
            best_params = gnn.store.values.copy()
            stagnant = 0
            plateau = 0
        else:
            stagnant += 1
            plateau += 1

        if stagnant >= train_config.early_stop_patience:
            log.stop_reason = (f"early stop: no validation improvement for "
                               f"{stagnant} epochs")
            log.events.append({"epoch": epoch, "event": "early_stop"})
            break
        if plateau >= train_config.plateau_patience:
            adam.learning_rate *= train_config.lr_decay
            plateau = 0
            log.events.append({"epoch": epoch, "event": "lr_decay",
                               "learning_rate": adam.learning_rate})
    else:
        log.stop_reason = f"reached max_epochs={train_config.max_epochs}"

    log.wall_time_s = time.time() - started
    _finalize(gnn, best_params, log, out_dir)
    return gnn, log


def _finalize(gnn: Gnn, best_params: np.ndarray, log: TrainingLog,
              out_dir) -> None:
    gnn.store.values[:] = best_params
    if out_dir is not None:
        from ..surrogate.checkpoint import save_checkpoint
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(gnn, out_dir / "checkpoint.npz",
                        metadata={"training": log.to_dict()})
        log.save(out_dir)

"""GNN surrogate models: features, architecture, losses, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .features import FeatureScales, GraphFeatures, build_features, \
    feature_scales_for
from .losses import GraphSystem, GraphTargets, LossWeights, relative_error, \
    variant_loss
from .model import Gnn, GnnConfig
from .transform import velocity_transform, velocity_transform_inv

__all__ = [
    "load_checkpoint", "save_checkpoint",
    "FeatureScales", "GraphFeatures", "build_features", "feature_scales_for",
    "GraphSystem", "GraphTargets", "LossWeights", "relative_error",
    "variant_loss", "Gnn", "GnnConfig",
    "velocity_transform", "velocity_transform_inv",
]

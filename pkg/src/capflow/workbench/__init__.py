"""Dataset lifecycle, training, evaluation, benchmarking, and the CLI."""

from .dataset import DatasetManifest, build_dataset, load_manifest
from .evaluation import EvalReport, evaluate, generalization_study
from .training import TrainConfig, TrainingLog, train, variant_weights

__all__ = ["DatasetManifest", "build_dataset", "load_manifest",
           "EvalReport", "evaluate", "generalization_study",
           "TrainConfig", "TrainingLog", "train", "variant_weights"]

"""Hybrid quantum-fuzzy image classifier on an exact small-register simulator."""

from .model import ModelConfig, ModelParams, init_params, model_forward
from .training import TrainConfig, MetricsRecord, evaluate, train

__all__ = [
    "ModelConfig",
    "ModelParams",
    "init_params",
    "model_forward",
    "TrainConfig",
    "MetricsRecord",
    "evaluate",
    "train",
]

__version__ = "0.1.0"

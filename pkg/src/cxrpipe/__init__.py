"""Multi-label image classification pipeline: SGDR, LR range test, progressive resizing."""

from .errors import (CheckpointError, CxrError, DivergenceError, NoDescentError, ShapeError,
                     ValidationError)
from .labels import CLASS_NAMES, NO_FINDING, NUM_CLASSES, PATHOLOGIES
from .model import ModelConfig, build_model, forward, predict_probs
from .pipeline import PipelineConfig, run_ablation, run_training

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES", "NO_FINDING", "NUM_CLASSES", "PATHOLOGIES",
    "CheckpointError", "CxrError", "DivergenceError", "NoDescentError", "ShapeError",
    "ValidationError", "ModelConfig", "build_model", "forward", "predict_probs",
    "PipelineConfig", "run_ablation", "run_training",
]

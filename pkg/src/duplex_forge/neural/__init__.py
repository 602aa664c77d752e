"""Desk-scale frame model: embedding sum, RNN backbone, parallel heads."""

from .net import FrameNet, InferenceState, ModelConfig, StepLogits, masked_loss, reference_vector
from .sampling import sample_logits, sample_step
from .train import (
    DuplexFrameModel,
    GradCheckResult,
    TrainingDiverged,
    grad_check,
    load_checkpoint,
    perplexity,
    save_checkpoint,
    train,
)

__all__ = [
    "DuplexFrameModel", "FrameNet", "GradCheckResult", "InferenceState", "ModelConfig", "StepLogits",
    "TrainingDiverged", "grad_check", "load_checkpoint", "masked_loss", "perplexity", "reference_vector",
    "sample_logits", "sample_step", "save_checkpoint", "train",
]

"""Conditional flow-matching estimator: network, training, sampling, checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .network import ArchConfig, VelocityFieldModel, sinusoidal_time_embedding
from .sampling import FlowSchedule, GatedPrediction, sample, sample_batch
from .training import (Adam, LossBreakdown, TrainConfig, cfm_train_step,
                       destandardize_chunk, fit, standardize_chunk)

__all__ = [
    "ArchConfig", "VelocityFieldModel", "sinusoidal_time_embedding",
    "FlowSchedule", "GatedPrediction", "sample", "sample_batch",
    "Adam", "LossBreakdown", "TrainConfig", "cfm_train_step", "fit",
    "standardize_chunk", "destandardize_chunk",
    "CheckpointError", "save_checkpoint", "load_checkpoint",
]

"""Analytical and discriminative baselines sharing one prediction record shape."""

from .gmo import MomentumObserver, MomentumObserverState, gmo_localize, gmo_update
from .cpf import ContactParticleFilter, ParticleSet, cpf_step
from .mlp import MLPEstimator, MLPConfig, mlp_train, mlp_infer
from .records import PredictionRecord

__all__ = [
    "PredictionRecord",
    "MomentumObserver", "MomentumObserverState", "gmo_update", "gmo_localize",
    "ContactParticleFilter", "ParticleSet", "cpf_step",
    "MLPEstimator", "MLPConfig", "mlp_train", "mlp_infer",
]

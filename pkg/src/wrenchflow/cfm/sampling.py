"""Euler-flow sampling and mask-gated prediction.

Sampling integrates x_{k+1} = x_k + dt * v_theta(x_k, t_k; c) for K steps from
Gaussian noise, reads the contact mask from the mask head at the final step,
de-standardizes the wrench chunk back to physical units, and gates it:
wrench cells where the mask probability does not exceed the threshold are
zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import sigmoid
from .network import VelocityFieldModel
from .training import destandardize_chunk

__all__ = ["FlowSchedule", "GatedPrediction", "sample", "sample_batch"]


@dataclass(frozen=True)
class FlowSchedule:
    steps: int = 10

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("flow schedule needs at least one step")

    @property
    def dt(self) -> float:
        return 1.0 / self.steps

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.steps) / self.steps


@dataclass
class GatedPrediction:
    mask: np.ndarray          # (H, N) probabilities
    wrench_raw: np.ndarray    # (H, N, w) physical units
    wrench_gated: np.ndarray  # (H, N, w); zero wherever mask <= delta
    delta: float

    def regate(self, delta: float) -> "GatedPrediction":
        gate = (self.mask > delta)[..., None]
        return GatedPrediction(self.mask, self.wrench_raw,
                               self.wrench_raw * gate, delta)


def sample_batch(model: VelocityFieldModel, windows: np.ndarray,
                 schedule: FlowSchedule, rng: np.random.Generator,
                 delta: float | None = None) -> list[GatedPrediction]:
    """Draw one gated prediction per window; windows (B, H, obs_dim)."""
    a = model.arch
    delta = a.delta if delta is None else delta
    B, H = windows.shape[0], windows.shape[1]
    x = rng.standard_normal((B, H, a.n_regions, a.wrench_dim)).astype(model.dtype)
    mask = None
    for k in range(schedule.steps):
        t = np.full(B, k / schedule.steps, dtype=model.dtype)
        v, logits = model.forward(x, t, windows)
        x = x + schedule.dt * v.data
        if k == schedule.steps - 1:
            mask = sigmoid(logits).data
    wrench = destandardize_chunk(x, a.chunk_scales)
    out = []
    for i in range(B):
        gate = (mask[i] > delta)[..., None]
        out.append(GatedPrediction(mask[i].copy(), wrench[i].copy(),
                                   (wrench[i] * gate).copy(), delta))
    return out


def sample(model: VelocityFieldModel, window: np.ndarray, schedule: FlowSchedule,
           rng: np.random.Generator, delta: float | None = None) -> GatedPrediction:
    return sample_batch(model, window[None], schedule, rng, delta)[0]

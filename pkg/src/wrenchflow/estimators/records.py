"""Shared prediction record emitted by every estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PredictionRecord:
    """Per-clip prediction: frame-by-frame region contact probabilities and
    wrench rows, in the same layout the ground-truth chunks use (base frame,
    region columns positional)."""

    mask: np.ndarray     # (H, N) probabilities in [0, 1]
    wrench: np.ndarray   # (H, N, w)
    estimator_id: str
    inference_ms: float = 0.0

    def __post_init__(self):
        if np.any(self.mask < -1e-9) or np.any(self.mask > 1 + 1e-9):
            raise ValueError("mask probabilities must lie in [0, 1]")

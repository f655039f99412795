"""Event extraction from per-frame mask/wrench fields.

A detected event is a maximal run of frames on one region whose mask
probability exceeds the threshold, lasting at least `min_duration` frames
(default 2, which suppresses single-frame mask flicker). The event's wrench
is read at its peak frame (largest gated wrench norm inside the run).

Ground-truth events are recovered from a ground-truth chunk with the same run
logic at a zero threshold on the wrench norm, so gt labels and detections
share one operational definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DetectedEvent", "extract_events", "extract_true_events"]


@dataclass(frozen=True)
class DetectedEvent:
    region_index: int     # 1-based
    onset: int            # frame
    offset: int           # frame, inclusive
    peak_frame: int
    wrench: np.ndarray    # (w,) at the peak frame, gated field
    peak_prob: float

    def __post_init__(self):
        if self.onset > self.offset:
            raise ValueError("event onset must not exceed offset")


def _runs(flags: np.ndarray):
    """Yield (start, stop_inclusive) for maximal True runs of a 1-D bool array."""
    idx = np.flatnonzero(flags)
    if idx.size == 0:
        return
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    stops = np.concatenate([idx[breaks], [idx[-1]]])
    yield from zip(starts, stops)


def extract_events(mask: np.ndarray, wrench_gated: np.ndarray, delta: float,
                   min_duration: int = 2) -> list[DetectedEvent]:
    """mask (H, N), wrench_gated (H, N, w) -> events sorted by onset."""
    H, N = mask.shape
    out: list[DetectedEvent] = []
    above = mask > delta
    for col in range(N):
        for start, stop in _runs(above[:, col]):
            if stop - start + 1 < min_duration:
                continue
            norms = np.linalg.norm(wrench_gated[start:stop + 1, col], axis=-1)
            peak = start + int(np.argmax(norms))
            out.append(DetectedEvent(col + 1, int(start), int(stop), peak,
                                     wrench_gated[peak, col].copy(),
                                     float(mask[start:stop + 1, col].max())))
    out.sort(key=lambda e: (e.onset, e.region_index))
    return out


def extract_true_events(chunk: np.ndarray, min_duration: int = 1) -> list[DetectedEvent]:
    """Ground-truth events from a wrench chunk (H, N, w): runs of nonzero norm."""
    norms = np.linalg.norm(chunk, axis=-1)  # (H, N)
    H, N = norms.shape
    out: list[DetectedEvent] = []
    for col in range(N):
        for start, stop in _runs(norms[:, col] > 0):
            if stop - start + 1 < min_duration:
                continue
            peak = start + int(np.argmax(norms[start:stop + 1, col]))
            out.append(DetectedEvent(col + 1, int(start), int(stop), peak,
                                     chunk[peak, col].copy(), 1.0))
    out.sort(key=lambda e: (e.onset, e.region_index))
    return out

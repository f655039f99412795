"""Evaluation suite and CLI: event extraction, the metric suite, comparison
experiments, figure rendering, and the command-line front end."""

from .events import DetectedEvent, extract_events, extract_true_events
from .harness import EvalClip, make_eval_clips, noisy_clip
from .metrics import MetricsReport, Tolerances, score

__all__ = [
    "DetectedEvent", "extract_events", "extract_true_events",
    "EvalClip", "make_eval_clips", "noisy_clip",
    "MetricsReport", "Tolerances", "score",
]

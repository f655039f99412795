"""Experiment configuration: one JSON file with per-module sections.

Every section has complete defaults, so `{}` is a valid config; unknown keys
anywhere are rejected with the offending path. The CLI deep-merges flag
overrides on top and writes the resolved snapshot next to every run's
outputs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .. import datagen as dg
from ..robotmodel import RobotModel, load_model, planar_humanoid_fixture

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "resolve_model"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GenSection:
    n_episodes: int = 200
    episode_s: float = 8.0
    h_win: int = 50
    stride: int = 10
    batch_size: int = 256
    events_per_episode: int = 1
    domain_randomization: bool = False
    ratio_pos: int = 1
    ratio_neg: int = 4
    repeat_positives: bool = False


@dataclass(frozen=True)
class TrainSection:
    d_model: int = 128
    n_layers: int = 4
    hidden_mult: int = 2
    head: str = "attention"
    n_slots: int = 4
    slot_dim: int = 32
    context_radius: int = 2
    chunk_scale_force: float = 50.0
    chunk_scale_torque: float = 10.0
    epochs: int = 8
    batch_size: int = 64
    lr: float = 3e-4
    lambda_neg: float = 0.1
    lambda_c: float = 0.01
    lambda_s: float = 0.001
    obs_noise_sigma: float = 0.01
    cosine_decay: bool = True


@dataclass(frozen=True)
class MLPSection:
    hidden: tuple[int, ...] = (512, 512, 512)
    epochs: int = 8
    batch_size: int = 64
    lr: float = 3e-4
    lambda_neg: float = 0.1
    lambda_s: float = 0.001
    obs_noise_sigma: float = 0.01


@dataclass(frozen=True)
class GMOSection:
    gain: float = 50.0
    sigma_r: float = 2.0


@dataclass(frozen=True)
class CPFSection:
    particles: int = 200
    sigma_lik: float = 0.5
    n_contacts: int = 1


@dataclass(frozen=True)
class EvalSection:
    delta: float = 0.5
    min_duration: int = 2
    tol_links: int = 1
    tol_frames: int = 5
    flow_steps: int = 10
    n_clips: int = 500
    batch_size: int = 128


@dataclass(frozen=True)
class NoiseSection:
    grid: tuple[float, ...] = (0.0, 0.01, 0.02, 0.05)
    n_clips: int = 200


@dataclass(frozen=True)
class MultiContactSection:
    k_values: tuple[int, ...] = (1, 2, 3)
    n_clips_per_k: int = 150


@dataclass(frozen=True)
class RobustnessSection:
    tiers: tuple[str, ...] = ("good", "fair", "poor")
    n_metric_episodes: int = 240
    episode_s: float = 6.0
    stress_force_min_n: float = 50.0
    stress_force_max_n: float = 130.0
    stress_duration_min_s: float = 0.25
    stress_duration_max_s: float = 0.55
    train_episodes_per_tier: int = 600
    train_epochs: int = 4
    test_clips: int = 400
    eps: float = 0.05
    recovery_window: int = 25


@dataclass(frozen=True)
class CrossTaskSection:
    posture_offsets: tuple[float, ...] = (0.0, 0.12, -0.12)
    train_episodes_per_condition: int = 300
    train_epochs: int = 4
    test_clips_per_condition: int = 200


@dataclass(frozen=True)
class ExperimentConfig:
    model_file: str = "fixture"
    tier: str = "good"
    seed: int = 0
    sampler: dg.ContactSamplerConfig = field(default_factory=dg.ContactSamplerConfig)
    observation: dg.ObservationConfig = field(default_factory=dg.ObservationConfig)
    gen: GenSection = field(default_factory=GenSection)
    train: TrainSection = field(default_factory=TrainSection)
    mlp: MLPSection = field(default_factory=MLPSection)
    gmo: GMOSection = field(default_factory=GMOSection)
    cpf: CPFSection = field(default_factory=CPFSection)
    eval: EvalSection = field(default_factory=EvalSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    multi_contact: MultiContactSection = field(default_factory=MultiContactSection)
    robustness: RobustnessSection = field(default_factory=RobustnessSection)
    crosstask: CrossTaskSection = field(default_factory=CrossTaskSection)

    def to_dict(self) -> dict:
        def conv(x):
            if dataclasses.is_dataclass(x):
                return {k: conv(v) for k, v in dataclasses.asdict(x).items()}
            if isinstance(x, tuple):
                return list(x)
            return x
        return {f.name: conv(getattr(self, f.name)) for f in dataclasses.fields(self)}


def _build(cls, d: dict, path: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        return cls(**{k: _coerce(cls, k, v, path) for k, v in d.items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from e


def _coerce(cls, key, value, path):
    ftypes = {f.name: f for f in dataclasses.fields(cls)}
    default = ftypes[key].default_factory() if ftypes[key].default_factory is not dataclasses.MISSING \
        else ftypes[key].default
    if dataclasses.is_dataclass(default):
        return _build(type(default), value, f"{path}.{key}")
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    raw: dict = {}
    if path:
        with open(path) as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config file {path}: not valid JSON ({e})") from e
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return _build(ExperimentConfig, raw, "config")


def resolve_model(cfg: ExperimentConfig) -> RobotModel:
    if cfg.model_file == "fixture":
        return planar_humanoid_fixture()
    return load_model(cfg.model_file)


def acceptance_config(seed: int = 0) -> ExperimentConfig:
    """Frozen settings for the acceptance gate: 5000 training episodes with
    one sampled contact each (8 s at 50 Hz), the default estimator stack, and
    reduced-but-honest ablation trainings that fit the stated runtime budgets
    on a small CPU box."""
    return load_config(None, {
        "seed": seed,
        "gen.n_episodes": 5000,
        "gen.batch_size": 512,
        "train.epochs": 8,
        "mlp.epochs": 8,
        "eval.n_clips": 1000,
    })

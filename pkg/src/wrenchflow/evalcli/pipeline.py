"""Wiring between the experiment config and the library modules: dataset
generation, estimator training, and eval-clip construction. Shared by the CLI
subcommands and the acceptance suite so both run the exact same pipelines.
"""

from __future__ import annotations

import numpy as np

from .. import control as ctl
from .. import datagen as dg
from ..cfm import ArchConfig, TrainConfig, VelocityFieldModel, fit
from ..estimators.mlp import MLPConfig, MLPEstimator, mlp_train
from ..robotmodel import RobotModel
from . import harness
from .config import ExperimentConfig
from .metrics import Tolerances

__all__ = ["gains_for", "tolerances", "arch_for", "train_config", "mlp_config",
           "generate_dataset", "train_cfm", "train_mlp", "eval_clips"]


def gains_for(model: RobotModel) -> ctl.PDGains:
    return ctl.default_gains(model)


def tolerances(cfg: ExperimentConfig) -> Tolerances:
    e = cfg.eval
    return Tolerances(link_hops=e.tol_links, time_frames=e.tol_frames,
                      delta=e.delta, min_duration=e.min_duration)


def arch_for(cfg: ExperimentConfig, model: RobotModel, extra_obs_dim: int = 0) -> ArchConfig:
    t = cfg.train
    scales = tuple([t.chunk_scale_force] * 2 + [t.chunk_scale_torque])
    return ArchConfig(
        obs_dim=dg.ObsLayout(model.n).dim + extra_obs_dim,
        n_regions=model.n_regions,
        wrench_dim=model.w,
        horizon=cfg.gen.h_win,
        d_model=t.d_model,
        n_layers=t.n_layers,
        hidden_mult=t.hidden_mult,
        head=t.head,
        n_slots=t.n_slots,
        slot_dim=t.slot_dim,
        context_radius=t.context_radius,
        chunk_scales=scales,
        delta=cfg.eval.delta,
        flow_steps=cfg.eval.flow_steps,
    )


def train_config(cfg: ExperimentConfig, seed: int, epochs: int | None = None) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        lr=t.lr, batch_size=t.batch_size, epochs=epochs or t.epochs,
        lambda_neg=t.lambda_neg, lambda_c=t.lambda_c, lambda_s=t.lambda_s,
        cosine_decay=t.cosine_decay, seed=seed,
        obs_noise=dg.NoiseConfig.uniform(t.obs_noise_sigma),
    )


def mlp_config(cfg: ExperimentConfig, seed: int, epochs: int | None = None) -> MLPConfig:
    m = cfg.mlp
    scales = tuple([cfg.train.chunk_scale_force] * 2 + [cfg.train.chunk_scale_torque])
    return MLPConfig(hidden=tuple(m.hidden), lr=m.lr, batch_size=m.batch_size,
                     epochs=epochs or m.epochs, lambda_neg=m.lambda_neg,
                     lambda_s=m.lambda_s, seed=seed, chunk_scales=scales,
                     obs_noise=dg.NoiseConfig.uniform(m.obs_noise_sigma))


def generate_dataset(cfg: ExperimentConfig, model: RobotModel, seed: int,
                     n_episodes: int | None = None, tier: str | None = None,
                     events_override=None, q_target=None, progress=None):
    g = cfg.gen
    gen = dg.GenerationConfig(
        n_episodes=n_episodes or g.n_episodes,
        episode_s=g.episode_s,
        h_win=g.h_win,
        stride=g.stride,
        batch_size=g.batch_size,
        events_per_episode=g.events_per_episode,
        tier=tier or cfg.tier,
        seed=seed,
        domain_randomization=g.domain_randomization,
        ratio=(g.ratio_pos, g.ratio_neg),
        repeat_positives=g.repeat_positives,
    )
    gains = gains_for(model)
    return dg.generate_records(model, gains, gen, sampler=cfg.sampler,
                               obs_cfg=cfg.observation, events_override=events_override,
                               q_target=q_target, progress=progress)


def train_cfm(cfg: ExperimentConfig, model: RobotModel, records, seed: int,
              epochs: int | None = None, log_every: int = 0, log_fn=print):
    arch = arch_for(cfg, model)
    net = VelocityFieldModel(arch, np.random.default_rng(seed))
    history = fit(net, records, train_config(cfg, seed, epochs),
                  log_every=log_every, log_fn=log_fn)
    return net, history


def train_mlp(cfg: ExperimentConfig, records, seed: int,
              epochs: int | None = None, log_every: int = 0, log_fn=print):
    return mlp_train(records, mlp_config(cfg, seed, epochs),
                     log_every=log_every, log_fn=log_fn)


def eval_clips(cfg: ExperimentConfig, model: RobotModel, seed: int,
               n_clips: int | None = None, tier: str | None = None,
               events_override=None, q_target=None) -> list[harness.EvalClip]:
    return harness.make_eval_clips(
        model, gains_for(model), tier or cfg.tier, n_clips or cfg.eval.n_clips,
        seed=seed, episode_s=cfg.gen.episode_s, h_win=cfg.gen.h_win,
        stride=cfg.gen.stride, sampler=cfg.sampler, events_override=events_override,
        batch_size=cfg.eval.batch_size, q_target=q_target)

"""Evaluation clips and estimator runners.

An EvalClip carries the observation window and ground truth like a dataset
record, plus the privileged simulator channels (full generalized state,
applied torques, ground-reaction generalized forces) that the analytical
baselines consume. The learned estimators see only the observation window.

Noise injection for comparisons is defined on the normalized observation
channels; for the baselines the same noise levels are mapped back to raw
units through the fixed observation weights (and the impedance torque scale),
so every estimator faces the same effective sensor noise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .. import control as ctl
from .. import datagen as dg
from ..cfm import FlowSchedule, VelocityFieldModel, sample_batch
from ..estimators import PredictionRecord
from ..estimators import cpf as cpf_mod
from ..estimators import gmo as gmo_mod
from ..estimators.mlp import MLPEstimator
from ..robotmodel import RobotModel

__all__ = ["EvalClip", "make_eval_clips", "noisy_clip", "predict_cfm",
           "predict_mlp", "predict_gmo", "predict_cpf"]

LOG_DT = 1.0 / ctl.LOG_HZ


@dataclass
class EvalClip:
    obs: np.ndarray      # (H, D) normalized tokens
    wrench: np.ndarray   # (H, N, w) ground truth, base frame
    mask: np.ndarray     # (H, N)
    q_base: np.ndarray   # (H, 3) privileged
    q_joint: np.ndarray  # (H, n) raw joint positions
    v: np.ndarray        # (H, b+n) privileged full generalized velocity
    tau: np.ndarray      # (H, n) applied torques
    grf_gen: np.ndarray  # (H, b+n) privileged ground-reaction generalized force

    @property
    def positive(self) -> bool:
        return bool(np.any(self.mask > 0))


def _clips_from_rollout(rollout: ctl.Rollout, h_win: int, stride: int,
                        model: RobotModel, gains: ctl.PDGains, tier: ctl.ControllerTier,
                        obs_cfg: dg.ObservationConfig) -> list[EvalClip]:
    T = len(rollout)
    if T < h_win:
        return []
    tokens = dg.rollout_tokens(rollout, model, gains, tier, obs_cfg).astype(np.float32)
    mask = (np.linalg.norm(rollout.gt_wrench, axis=-1) > 0).astype(np.float32)
    v_full = np.concatenate([rollout.base_vel, rollout.base_pitch_rate[:, None],
                             rollout.qd_joint], axis=1)
    q_base = np.concatenate([rollout.base_pos, rollout.base_pitch[:, None]], axis=1)
    out = []
    for start in range(0, T - h_win + 1, stride):
        sl = slice(start, start + h_win)
        out.append(EvalClip(tokens[sl].copy(), rollout.gt_wrench[sl].copy(), mask[sl].copy(),
                            q_base[sl].copy(), rollout.q_joint[sl].copy(), v_full[sl].copy(),
                            rollout.tau[sl].copy(), rollout.grf_gen[sl].copy()))
    return out


def make_eval_clips(model: RobotModel, gains: ctl.PDGains, tier_label: str,
                    n_clips: int, seed: int, episode_s: float = 8.0, h_win: int = 50,
                    stride: int = 10, ratio: tuple[int, int] = (1, 4),
                    sampler: dg.ContactSamplerConfig | None = None,
                    events_override=None, batch_size: int = 128,
                    sim: ctl.SimConfig | None = None, q_target=None) -> list[EvalClip]:
    """Deterministically generate a class-balanced held-out clip set."""
    sampler = sampler or dg.ContactSamplerConfig()
    obs_cfg = dg.ObservationConfig()
    tier = ctl.TIERS[tier_label]
    pos: list[EvalClip] = []
    neg: list[EvalClip] = []
    want_pos = n_clips * ratio[0] // (ratio[0] + ratio[1])
    want_neg = n_clips - want_pos
    episode = 0
    while len(pos) < want_pos or len(neg) < want_neg:
        events, seeds = [], []
        for e in range(episode, episode + batch_size):
            rng_e = np.random.default_rng([seed, e, 1])
            if events_override is not None:
                events.append(events_override(e, rng_e))
            else:
                events.append([dg.sample_contact(rng_e, sampler, model, episode_s)])
            seeds.append(seed + e)
        rollouts = ctl.run_episodes_batch(model, gains, tier, events, episode_s, seeds,
                                          sim, q_target=q_target)
        for r in rollouts:
            for clip in _clips_from_rollout(r, h_win, stride, model, gains, tier, obs_cfg):
                if clip.positive and len(pos) < want_pos:
                    pos.append(clip)
                elif not clip.positive and len(neg) < want_neg:
                    neg.append(clip)
        episode += batch_size
        if episode > 100 * max(1, n_clips):
            raise RuntimeError("eval clip generation did not converge")
    clips = pos + neg
    order = np.random.default_rng([seed, 9]).permutation(len(clips))
    return [clips[i] for i in order]


def noisy_clip(clip: EvalClip, sigma: float, rng: np.random.Generator,
               model: RobotModel, gains: ctl.PDGains, tier_label: str,
               obs_cfg: dg.ObservationConfig | None = None) -> EvalClip:
    """Apply sensor noise of scale `sigma` (normalized channels) to both the
    observation window (for learned estimators) and the raw privileged
    channels (for the baselines), consistently through the fixed weights."""
    if sigma <= 0:
        return clip
    obs_cfg = obs_cfg or dg.ObservationConfig()
    layout = dg.ObsLayout(model.n)
    noise = dg.NoiseConfig.uniform(sigma)
    obs = dg.inject_noise(clip.obs, noise, rng, layout)
    tier = ctl.TIERS[tier_label]
    gs = tier.gain_scale
    denom = gains.kp * gs * obs_cfg.dq_ref + gains.kd * gs * obs_cfg.dqd_ref + obs_cfg.eps_norm
    H, n = clip.tau.shape
    q_base = clip.q_base.copy()
    q_joint = clip.q_joint.copy()
    v = clip.v.copy()
    tau = clip.tau.copy()
    q_base[:, 2] += rng.normal(0, sigma / obs_cfg.w_g, size=H)          # pitch via gravity dir
    q_joint += rng.normal(0, sigma / obs_cfg.w_q, size=(H, n))
    v[:, :2] += rng.normal(0, sigma / obs_cfg.w_qd, size=(H, 2))        # base velocity ~ qd group
    v[:, 2] += rng.normal(0, sigma / obs_cfg.w_omega, size=H)
    v[:, 3:] += rng.normal(0, sigma / obs_cfg.w_qd, size=(H, n))
    tau += rng.normal(0, sigma, size=(H, n)) * denom / obs_cfg.w_tau
    return EvalClip(obs, clip.wrench, clip.mask, q_base, q_joint, v, tau, clip.grf_gen)


# ---------------------------------------------------------------------------
# estimator runners (uniform signature: clips -> list[PredictionRecord])

def predict_cfm(model: VelocityFieldModel, clips: list[EvalClip], seed: int,
                steps: int | None = None, delta: float | None = None,
                batch_size: int = 64) -> list[PredictionRecord]:
    schedule = FlowSchedule(steps or model.arch.flow_steps)
    rng = np.random.default_rng(seed)
    out: list[PredictionRecord] = []
    for lo in range(0, len(clips), batch_size):
        chunk = clips[lo:lo + batch_size]
        windows = np.stack([c.obs for c in chunk])
        t0 = time.perf_counter()
        preds = sample_batch(model, windows, schedule, rng, delta)
        ms = (time.perf_counter() - t0) * 1e3 / len(chunk)
        for p in preds:
            out.append(PredictionRecord(p.mask, p.wrench_gated, "cfm", inference_ms=ms))
    return out


def predict_mlp(model: MLPEstimator, clips: list[EvalClip],
                delta: float = 0.5, batch_size: int = 64) -> list[PredictionRecord]:
    out: list[PredictionRecord] = []
    scales = np.asarray(model.cfg.chunk_scales, dtype=np.float32)
    for lo in range(0, len(clips), batch_size):
        chunk = clips[lo:lo + batch_size]
        windows = np.stack([c.obs for c in chunk])
        t0 = time.perf_counter()
        wr, mk = model.forward(windows)
        ms = (time.perf_counter() - t0) * 1e3 / len(chunk)
        mask = 1.0 / (1.0 + np.exp(-mk.data))
        wrench = wr.data * scales * (mask > delta)[..., None]
        for i in range(len(chunk)):
            out.append(PredictionRecord(mask[i], wrench[i], "mlp", inference_ms=ms))
    return out


def predict_gmo(model: RobotModel, clips: list[EvalClip], gain: float = 50.0,
                sigma_r: float = 2.0) -> list[PredictionRecord]:
    out = []
    for clip in clips:
        t0 = time.perf_counter()
        rec = gmo_mod.run_clip(model, clip.q_base, clip.q_joint, clip.v, clip.tau,
                               clip.grf_gen, LOG_DT, gain=gain, sigma_r=sigma_r)
        rec.inference_ms = (time.perf_counter() - t0) * 1e3
        out.append(rec)
    return out


def predict_cpf(model: RobotModel, clips: list[EvalClip], seed: int,
                n_particles: int = 200, n_contacts: int = 1, sigma_lik: float = 0.5,
                gain: float = 50.0) -> list[PredictionRecord]:
    out = []
    for idx, clip in enumerate(clips):
        rng = np.random.default_rng([seed, idx])
        t0 = time.perf_counter()
        rec = cpf_mod.run_clip(model, clip.q_base, clip.q_joint, clip.v, clip.tau,
                               clip.grf_gen, LOG_DT, rng, n_particles=n_particles,
                               n_contacts=n_contacts, sigma_lik=sigma_lik, gain=gain)
        rec.inference_ms = (time.perf_counter() - t0) * 1e3
        out.append(rec)
    return out

"""Conditional flow-matching training: composite loss, Adam, and the fit loop.

Per training sample: draw flow time t ~ U(0,1) and noise x0 ~ N(0, I), form
the straight-line interpolant x_t = (1 - t) x0 + t x1 against the
standardized ground-truth chunk x1, and regress the velocity field onto the
constant path velocity u = x1 - x0. The composite loss couples that flow
regression with mask supervision and two light priors:

    total = mask BCE
          + mask-weighted flow MSE        (weight 1 on contact cells, lambda_neg off them)
          + lambda_c * mean ||x1_hat||^2 over non-contact cells   (x1_hat = x_t + (1-t) v)
          + lambda_s * mean sigmoid(mask logits)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, bce_with_logits, mse, sigmoid
from ..datagen import DatasetRecord, NoiseConfig, ObsLayout, inject_noise
from .network import ArchConfig, VelocityFieldModel

__all__ = ["TrainConfig", "LossBreakdown", "Adam", "standardize_chunk",
           "destandardize_chunk", "cfm_train_step", "fit"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 8
    lambda_neg: float = 0.1
    lambda_c: float = 0.01
    lambda_s: float = 0.001
    mask_pos_weight: float = 25.0  # BCE weight on contact cells (~0.6% of cells)
    cosine_decay: bool = True
    min_lr_frac: float = 0.1
    seed: int = 0
    obs_noise: NoiseConfig = field(default_factory=lambda: NoiseConfig.uniform(0.01))


@dataclass(frozen=True)
class LossBreakdown:
    mask: float
    wrench: float
    consistency: float
    sparsity: float

    @property
    def total(self) -> float:
        return self.mask + self.wrench + self.consistency + self.sparsity


class NonFiniteLossError(RuntimeError):
    pass


class Adam:
    """Adaptive-moment optimizer over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = {k: np.zeros_like(p.data, dtype=np.float32) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data, dtype=np.float32) for k, p in params.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        c = self.cfg
        b1c = 1.0 - c.beta1 ** self.t
        b2c = 1.0 - c.beta2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(np.float32)
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            update = lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + c.adam_eps)
            p.data = (p.data - update).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def standardize_chunk(chunk: np.ndarray, scales) -> np.ndarray:
    return chunk / np.asarray(scales, dtype=chunk.dtype)


def destandardize_chunk(x: np.ndarray, scales) -> np.ndarray:
    return x * np.asarray(scales, dtype=x.dtype)


def cfm_train_step(model: VelocityFieldModel, obs: np.ndarray, chunk: np.ndarray,
                   gt_mask: np.ndarray, rng: np.random.Generator, cfg: TrainConfig,
                   opt: Adam, lr: float | None = None) -> LossBreakdown:
    """One gradient step on a batch. obs (B,H,D), chunk (B,H,N,w) in physical
    units, gt_mask (B,H,N) in {0,1}."""
    a = model.arch
    dtype = model.dtype
    B = obs.shape[0]
    x1 = standardize_chunk(chunk.astype(dtype), a.chunk_scales)
    x0 = rng.standard_normal(x1.shape).astype(dtype)
    t = rng.uniform(0.0, 1.0, size=B).astype(dtype)
    tb = t[:, None, None, None]
    xt = (1.0 - tb) * x0 + tb * x1
    u = x1 - x0

    v, logits = model.forward(xt, t, obs.astype(dtype))

    lam = np.where(gt_mask > 0, 1.0, cfg.lambda_neg).astype(dtype)[..., None]
    lam = np.ascontiguousarray(np.broadcast_to(lam, x1.shape))
    l_wrench = mse(v, u, weights=lam)

    bce_w = np.where(gt_mask > 0, cfg.mask_pos_weight, 1.0).astype(dtype)
    l_mask = bce_with_logits(logits, gt_mask.astype(dtype), weights=bce_w)

    noncontact = np.ascontiguousarray(
        np.broadcast_to((gt_mask <= 0).astype(dtype)[..., None], x1.shape))
    n_nc = max(1.0, float(noncontact.sum()))
    x1_hat = Tensor(xt) + v * (1.0 - tb).astype(dtype)
    l_cons = mse(x1_hat, np.zeros_like(x1), weights=noncontact) * (cfg.lambda_c * x1.size / n_nc)

    l_sparse = sigmoid(logits).mean() * cfg.lambda_s

    total = l_wrench + l_mask + l_cons + l_sparse
    if not np.isfinite(total.data):
        raise NonFiniteLossError(
            f"non-finite loss: wrench={l_wrench.data} mask={l_mask.data} "
            f"cons={l_cons.data} sparse={l_sparse.data}")
    opt.zero_grad()
    total.backward()
    opt.step(cfg.lr if lr is None else lr)
    return LossBreakdown(float(l_mask.data), float(l_wrench.data),
                         float(l_cons.data), float(l_sparse.data))


def _lr_schedule(cfg: TrainConfig, step: int, total_steps: int) -> float:
    if not cfg.cosine_decay or total_steps <= 1:
        return cfg.lr
    frac = step / max(1, total_steps - 1)
    lo = cfg.lr * cfg.min_lr_frac
    return lo + 0.5 * (cfg.lr - lo) * (1.0 + np.cos(np.pi * frac))


def fit(model: VelocityFieldModel, records: list[DatasetRecord], cfg: TrainConfig,
        log_every: int = 0, log_fn=print) -> list[LossBreakdown]:
    """Train on a record list; deterministic given cfg.seed. Returns per-step
    loss history. Incomplete trailing batches are dropped so every epoch sees
    the same number of steps."""
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, cfg)
    n = len(records)
    bs = min(cfg.batch_size, n)
    steps_per_epoch = n // bs
    total_steps = cfg.epochs * steps_per_epoch
    layout = ObsLayout((model.arch.obs_dim - 3) // 3)
    history: list[LossBreakdown] = []
    obs_all = np.stack([r.obs for r in records])
    wr_all = np.stack([r.wrench for r in records])
    mk_all = np.stack([r.mask for r in records])
    step = 0
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for k in range(steps_per_epoch):
            idx = order[k * bs:(k + 1) * bs]
            obs = obs_all[idx]
            if cfg.obs_noise.any():
                obs = inject_noise(obs, cfg.obs_noise, rng, layout)
            loss = cfm_train_step(model, obs, wr_all[idx], mk_all[idx], rng, cfg, opt,
                                  lr=_lr_schedule(cfg, step, total_steps))
            history.append(loss)
            step += 1
            if log_every and step % log_every == 0:
                log_fn(f"step {step}/{total_steps}: total={loss.total:.4f} "
                       f"mask={loss.mask:.4f} wrench={loss.wrench:.4f}")
    return history

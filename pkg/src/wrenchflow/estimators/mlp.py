"""Direct MLP regressor baseline: observation window in, mask + wrench out.

A plain fully connected network over the flattened window, trained with the
same composite loss as the flow estimator minus the flow term (the wrench
head regresses the standardized ground-truth chunk directly). Deterministic
at inference: one forward pass, no sampling.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, bce_with_logits, mse, sigmoid
from ..datagen import DatasetRecord, NoiseConfig, ObsLayout, inject_noise
from .records import PredictionRecord
from ..cfm.training import Adam, TrainConfig

__all__ = ["MLPConfig", "MLPEstimator", "mlp_train", "mlp_infer"]


@dataclass(frozen=True)
class MLPConfig:
    hidden: tuple[int, ...] = (512, 512, 512)
    lr: float = 3e-4
    batch_size: int = 64
    epochs: int = 8
    lambda_neg: float = 0.1
    lambda_s: float = 0.001
    mask_pos_weight: float = 25.0
    seed: int = 0
    chunk_scales: tuple = (50.0, 50.0, 10.0)
    obs_noise: NoiseConfig = field(default_factory=lambda: NoiseConfig.uniform(0.01))


class MLPEstimator:
    def __init__(self, obs_dim: int, horizon: int, n_regions: int, wrench_dim: int,
                 cfg: MLPConfig, rng: np.random.Generator | None = None):
        self.obs_dim, self.horizon = obs_dim, horizon
        self.n_regions, self.wrench_dim = n_regions, wrench_dim
        self.cfg = cfg
        rng = rng or np.random.default_rng(0)
        dims = [horizon * obs_dim, *cfg.hidden]
        self.params: dict[str, Tensor] = {}
        for i in range(len(dims) - 1):
            self.params[f"w{i}"] = Tensor.param(
                (rng.standard_normal((dims[i], dims[i + 1])) * dims[i] ** -0.5).astype(np.float32))
            self.params[f"b{i}"] = Tensor.param(np.zeros(dims[i + 1], dtype=np.float32))
        out_w = horizon * n_regions * wrench_dim
        out_m = horizon * n_regions
        self.params["head_w"] = Tensor.param(
            (rng.standard_normal((dims[-1], out_w)) * 0.02 * dims[-1] ** -0.5).astype(np.float32))
        self.params["head_w_b"] = Tensor.param(np.zeros(out_w, dtype=np.float32))
        self.params["head_m"] = Tensor.param(
            (rng.standard_normal((dims[-1], out_m)) * 0.02 * dims[-1] ** -0.5).astype(np.float32))
        self.params["head_m_b"] = Tensor.param(np.zeros(out_m, dtype=np.float32))

    @property
    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def forward(self, obs: np.ndarray):
        """obs (B, H, D) -> wrench (B, H, N, w) standardized, logits (B, H, N)."""
        B = obs.shape[0]
        h = Tensor(obs.reshape(B, self.horizon * self.obs_dim).astype(np.float32))
        n_hidden = len(self.cfg.hidden)
        for i in range(n_hidden):
            h = (h @ self.params[f"w{i}"] + self.params[f"b{i}"]).silu()
        wr = (h @ self.params["head_w"] + self.params["head_w_b"]).reshape(
            B, self.horizon, self.n_regions, self.wrench_dim)
        mk = (h @ self.params["head_m"] + self.params["head_m_b"]).reshape(
            B, self.horizon, self.n_regions)
        return wr, mk

    def meta(self) -> dict:
        return {
            "obs_dim": self.obs_dim, "horizon": self.horizon,
            "n_regions": self.n_regions, "wrench_dim": self.wrench_dim,
            "hidden": list(self.cfg.hidden), "chunk_scales": list(self.cfg.chunk_scales),
        }


def mlp_train(records: list[DatasetRecord], cfg: MLPConfig, obs_dim: int | None = None,
              log_every: int = 0, log_fn=print) -> tuple[MLPEstimator, list[float]]:
    """Train on dataset records; deterministic given cfg.seed."""
    H, D = records[0].obs.shape
    N, w = records[0].wrench.shape[1:]
    if obs_dim is not None and obs_dim != D:
        raise ValueError(f"obs dim mismatch: records have {D}, expected {obs_dim}")
    model = MLPEstimator(D, H, N, w, cfg, np.random.default_rng(cfg.seed))
    adam_cfg = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.epochs,
                           seed=cfg.seed)
    opt = Adam(model.params, adam_cfg)
    rng = np.random.default_rng(cfg.seed)
    layout = ObsLayout((D - 3) // 3)
    scales = np.asarray(cfg.chunk_scales, dtype=np.float32)
    obs_all = np.stack([r.obs for r in records])
    wr_all = np.stack([r.wrench for r in records]) / scales
    mk_all = np.stack([r.mask for r in records])
    n = len(records)
    bs = min(cfg.batch_size, n)
    steps = n // bs
    history: list[float] = []
    step = 0
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for k in range(steps):
            idx = order[k * bs:(k + 1) * bs]
            obs = obs_all[idx]
            if cfg.obs_noise.any():
                obs = inject_noise(obs, cfg.obs_noise, rng, layout)
            wr, mk = model.forward(obs)
            lam = np.where(mk_all[idx] > 0, 1.0, cfg.lambda_neg).astype(np.float32)[..., None]
            lam = np.ascontiguousarray(np.broadcast_to(lam, wr.data.shape))
            bce_w = np.where(mk_all[idx] > 0, cfg.mask_pos_weight, 1.0).astype(np.float32)
            loss = mse(wr, wr_all[idx].astype(np.float32), weights=lam) \
                + bce_with_logits(mk, mk_all[idx].astype(np.float32), weights=bce_w) \
                + sigmoid(mk).mean() * cfg.lambda_s
            opt.zero_grad()
            loss.backward()
            opt.step(cfg.lr)
            history.append(float(loss.data))
            step += 1
            if log_every and step % log_every == 0:
                log_fn(f"mlp step {step}: loss={history[-1]:.4f}")
    return model, history


def mlp_infer(model: MLPEstimator, window: np.ndarray, delta: float = 0.5) -> PredictionRecord:
    """Single-window inference returning the shared record shape."""
    t0 = time.perf_counter()
    wr, mk = model.forward(window[None])
    mask = 1.0 / (1.0 + np.exp(-mk.data[0]))
    wrench = wr.data[0] * np.asarray(model.cfg.chunk_scales, dtype=np.float32)
    wrench = wrench * (mask > delta)[..., None]
    ms = (time.perf_counter() - t0) * 1e3
    return PredictionRecord(mask, wrench, "mlp", inference_ms=ms)

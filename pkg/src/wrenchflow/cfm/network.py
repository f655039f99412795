"""Velocity-field network for conditional flow matching over contact chunks.

Shared-backbone, dual-head design: per-frame observation tokens and the
current flow state are embedded, concatenated with a sinusoidal flow-time
embedding, and passed through a residual MLP backbone operating per frame.
Two heads decode from the same features: a wrench head (the flow velocity,
one planar wrench per region per frame) and a mask head (per-region contact
logits). Heads are either plain per-frame linear readouts or lightweight
cross-attention readouts with learned region queries (config flag).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, concat, sigmoid, softmax

__all__ = ["ArchConfig", "VelocityFieldModel", "sinusoidal_time_embedding"]


@dataclass(frozen=True)
class ArchConfig:
    obs_dim: int
    n_regions: int
    wrench_dim: int
    horizon: int
    d_model: int = 128
    n_layers: int = 4
    hidden_mult: int = 2
    head: str = "attention"            # "attention" | "linear"
    n_slots: int = 4                   # attention head: feature slots per frame
    slot_dim: int = 32
    context_radius: int = 2            # frames of local context fed to the embedder
    chunk_scales: tuple = (50.0, 50.0, 10.0)  # std-scale per wrench channel
    delta: float = 0.5                 # mask gate threshold
    flow_steps: int = 10               # default sampling schedule K

    def __post_init__(self):
        if self.head not in ("attention", "linear"):
            raise ValueError(f"unknown head type {self.head!r}")
        if len(self.chunk_scales) != self.wrench_dim:
            raise ValueError("chunk_scales must have one entry per wrench channel")
        if self.d_model % 2:
            raise ValueError("d_model must be even (sinusoidal embedding)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["chunk_scales"] = list(self.chunk_scales)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ArchConfig":
        d = dict(d)
        d["chunk_scales"] = tuple(d["chunk_scales"])
        return ArchConfig(**d)


def sinusoidal_time_embedding(t: np.ndarray, dim: int, scale: float = 1000.0,
                              dtype=np.float32) -> np.ndarray:
    """(B,) flow times in [0, 1] -> (B, dim) sin/cos features."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(1, half - 1))
    arg = np.asarray(t, dtype=np.float64)[:, None] * scale * freqs[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=-1).astype(dtype)


class VelocityFieldModel:
    """Parameters theta plus the forward pass v_theta(x, t; c) -> (v, mask logits)."""

    def __init__(self, arch: ArchConfig, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        self.arch = arch
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}
        rng = rng or np.random.default_rng(0)
        self._build(rng)

    # -- parameter construction ----------------------------------------------
    def _add(self, name: str, shape, scale: float, rng) -> None:
        self.params[name] = Tensor.param(
            (rng.standard_normal(shape) * scale).astype(self.dtype))

    def _add_const(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor.param(value.astype(self.dtype))

    def _build(self, rng) -> None:
        a = self.arch
        d, fd = a.d_model, a.n_regions * a.wrench_dim
        hid = a.d_model * a.hidden_mult
        tok_in = (2 * a.context_radius + 1) * a.obs_dim
        self._add("tok_w", (tok_in, d), tok_in ** -0.5, rng)
        self._add_const("tok_b", np.zeros(d))
        self._add("flow_w", (fd, d), fd ** -0.5, rng)
        self._add_const("flow_b", np.zeros(d))
        self._add("in_w", (3 * d, d), (3 * d) ** -0.5, rng)
        self._add_const("in_b", np.zeros(d))
        for l in range(a.n_layers):
            self._add_const(f"ln{l}_g", np.ones(d))
            self._add_const(f"ln{l}_b", np.zeros(d))
            self._add(f"fc1_{l}_w", (d, hid), d ** -0.5, rng)
            self._add_const(f"fc1_{l}_b", np.zeros(hid))
            self._add(f"fc2_{l}_w", (hid, d), 0.5 * hid ** -0.5, rng)
            self._add_const(f"fc2_{l}_b", np.zeros(d))
        self._add_const("lnf_g", np.ones(d))
        self._add_const("lnf_b", np.zeros(d))
        if a.head == "linear":
            self._add("wr_w", (d, fd), 0.02 * d ** -0.5, rng)
            self._add_const("wr_b", np.zeros(fd))
            self._add("mk_w", (d, a.n_regions), 0.02 * d ** -0.5, rng)
            self._add_const("mk_b", np.zeros(a.n_regions))
        else:
            for h, out in (("wr", a.wrench_dim), ("mk", 1)):
                self._add(f"{h}_q", (a.n_regions, a.slot_dim), a.slot_dim ** -0.5, rng)
                self._add(f"{h}_k_w", (d, a.n_slots * a.slot_dim), d ** -0.5, rng)
                self._add(f"{h}_v_w", (d, a.n_slots * a.slot_dim), d ** -0.5, rng)
                self._add(f"{h}_o_w", (a.slot_dim, out), 0.02 * a.slot_dim ** -0.5, rng)
                self._add_const(f"{h}_o_b", np.zeros(out))

    @property
    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def param_names(self) -> list[str]:
        return list(self.params.keys())

    def astype(self, dtype) -> "VelocityFieldModel":
        """Copy with a different parameter dtype (f64 for gradient checks)."""
        out = VelocityFieldModel.__new__(VelocityFieldModel)
        out.arch = self.arch
        out.dtype = dtype
        out.params = {k: Tensor.param(v.data.astype(dtype)) for k, v in self.params.items()}
        return out

    def zero_heads(self) -> None:
        """Zero the head output projections so v == 0 and mask logits == 0."""
        for name in ("wr_w", "wr_b", "mk_w", "mk_b", "wr_o_w", "wr_o_b", "mk_o_w", "mk_o_b"):
            if name in self.params:
                self.params[name].data[...] = 0.0

    # -- forward pass ----------------------------------------------------------
    def _attention_head(self, h: Tensor, prefix: str, B: int, H: int) -> Tensor:
        """Cross-attention readout: N learned region queries over per-frame
        feature slots. Returns (B, H, N, out)."""
        a = self.arch
        p = self.params
        S, dk = a.n_slots, a.slot_dim
        keys = (h @ p[f"{prefix}_k_w"]).reshape(B, H, S, dk)
        vals = (h @ p[f"{prefix}_v_w"]).reshape(B, H, S, dk)
        # scores: (N, dk) @ (B, H, dk, S) -> (B, H, N, S)
        keys_t = keys.reshape(B, H, S, dk)
        scores = p[f"{prefix}_q"] @ _transpose_last(keys_t)
        attn = softmax(scores * (dk ** -0.5), axis=-1)
        out = attn @ vals                      # (B, H, N, dk)
        return out @ p[f"{prefix}_o_w"] + p[f"{prefix}_o_b"]

    def forward(self, x: np.ndarray | Tensor, t: np.ndarray, window: np.ndarray | Tensor):
        """x: (B, H, N, w) standardized chunk state; t: (B,) flow time;
        window: (B, H, obs_dim). Returns (v, mask_logits) Tensors of shape
        (B, H, N, w) and (B, H, N)."""
        a = self.arch
        p = self.params
        xt = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        c = window if isinstance(window, Tensor) else Tensor(np.asarray(window, dtype=self.dtype))
        B, H = xt.shape[0], xt.shape[1]
        if xt.shape != (B, H, a.n_regions, a.wrench_dim):
            raise ValueError(f"flow state shape {xt.shape} does not match "
                             f"(B, {a.horizon}, {a.n_regions}, {a.wrench_dim})")
        if c.shape != (B, H, a.obs_dim):
            raise ValueError(f"window shape {c.shape} does not match (B, H, {a.obs_dim})")

        tok = _stack_context(c, a.context_radius) @ p["tok_w"] + p["tok_b"]
        flow = xt.reshape(B, H, a.n_regions * a.wrench_dim) @ p["flow_w"] + p["flow_b"]
        temb = Tensor(sinusoidal_time_embedding(t, a.d_model, dtype=self.dtype))
        temb = temb.reshape(B, 1, a.d_model).broadcast_to((B, H, a.d_model))
        h = concat([tok, flow, temb], axis=-1) @ p["in_w"] + p["in_b"]
        for l in range(a.n_layers):
            z = h.layer_norm(p[f"ln{l}_g"], p[f"ln{l}_b"])
            z = (z @ p[f"fc1_{l}_w"] + p[f"fc1_{l}_b"]).silu()
            h = h + (z @ p[f"fc2_{l}_w"] + p[f"fc2_{l}_b"])
        h = h.layer_norm(p["lnf_g"], p["lnf_b"])

        if a.head == "linear":
            v = (h @ p["wr_w"] + p["wr_b"]).reshape(B, H, a.n_regions, a.wrench_dim)
            logits = h @ p["mk_w"] + p["mk_b"]
        else:
            v = self._attention_head(h, "wr", B, H)
            logits = self._attention_head(h, "mk", B, H).reshape(B, H, a.n_regions)
        return v, logits

    def mask_probabilities(self, logits: Tensor) -> np.ndarray:
        return sigmoid(logits).data


def _transpose_last(t: Tensor) -> Tensor:
    """Swap the last two axes (gradient = the same swap)."""
    data = np.swapaxes(t.data, -1, -2)

    def backward(g):
        return ((t, np.swapaxes(g, -1, -2)),)
    return t._make(data, (t,), backward)


def _stack_context(c: Tensor, radius: int) -> Tensor:
    """Concatenate each frame with its +-radius neighbors (edge frames repeat)
    so the per-frame embedder sees local temporal structure: an active push
    and the free recovery after it differ in frame-to-frame changes, not in
    any single token. (B, H, D) -> (B, H, (2r+1) D); pure gather, constant
    gradient scatter."""
    if radius == 0:
        return c
    B, H, D = c.data.shape
    idx = np.clip(np.arange(H)[:, None] + np.arange(-radius, radius + 1)[None, :], 0, H - 1)
    data = c.data[:, idx, :].reshape(B, H, (2 * radius + 1) * D)

    def backward(g):
        gc = np.zeros_like(c.data)
        g4 = g.reshape(B, H, 2 * radius + 1, D)
        for o in range(2 * radius + 1):
            np.add.at(gc, (slice(None), idx[:, o]), g4[:, :, o])
        return ((c, gc),)
    return c._make(data, (c,), backward)

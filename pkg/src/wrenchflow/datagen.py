"""Contact-event sampling, proprioceptive observation construction, window
extraction, class balancing, domain randomization, noise injection, and the
binary dataset format.

Observation token layout (planar fixture, n joints -> dim 3n + 3):

    [ w_q * (q - q_default) | w_qd * qd | w_omega * pitch_rate
      | w_g * gravity_dir(pitch) | w_tau * tau_hat ]

where tau_hat is the impedance-normalized joint torque
tau / (kp * dq_ref + kd * dqd_ref + eps). Weights are fixed constants, so the
construction is invertible for noiseless inputs.

Dataset file format (.wsds, all multi-byte values little-endian):

    magic b"WSDS" | version u32 | header_len u32 | header JSON (UTF-8)
    then `count` records, each the f32 arrays
    [obs: H x obs_dim][wrench: H x N x w][mask: H x N], no padding.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import control as ctl
from .control import ContactEvent, DomainScales, PDGains, Rollout, SimConfig
from .dynamics import GroundContactConfig
from .robotmodel import RobotModel

__all__ = [
    "ContactEvent",
    "ContactSamplerConfig",
    "ObservationConfig",
    "NoiseConfig",
    "DomainRandomizationConfig",
    "ObsLayout",
    "DatasetHeader",
    "DatasetRecord",
    "DatasetFormatError",
    "sample_contact",
    "impedance_normalized_torque",
    "gravity_direction",
    "build_observation",
    "rollout_tokens",
    "windowize",
    "assemble_dataset",
    "domain_randomize",
    "randomize_ground",
    "domain_scales",
    "inject_noise",
    "write_dataset",
    "read_dataset",
    "generate_records",
]

MAGIC = b"WSDS"
FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ContactSamplerConfig:
    force_min_n: float = 30.0
    force_max_n: float = 100.0
    duration_min_s: float = 0.1
    duration_max_s: float = 0.4
    start_margin_s: float = 0.5  # events stay clear of episode boundaries

    def __post_init__(self):
        if not (0 < self.force_min_n <= self.force_max_n):
            raise ValueError("force magnitude range must satisfy 0 < min <= max")
        if not (0 < self.duration_min_s <= self.duration_max_s):
            raise ValueError("duration range must satisfy 0 < min <= max")

    def content_hash(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def sample_contact(rng: np.random.Generator, cfg: ContactSamplerConfig,
                   model: RobotModel, episode_duration: float) -> ContactEvent:
    """Magnitude ~ U[fmin, fmax], direction uniform on the circle, duration
    ~ U[dmin, dmax], region uniform, point uniform over the region's surface
    samples, start uniform within the episode (respecting the margin)."""
    mag = rng.uniform(cfg.force_min_n, cfg.force_max_n)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    dur = rng.uniform(cfg.duration_min_s, cfg.duration_max_s)
    region = int(rng.integers(1, model.n_regions + 1))
    pts = model.region(region).points_m
    point = pts[int(rng.integers(len(pts)))]
    t_lo = cfg.start_margin_s
    t_hi = max(t_lo, episode_duration - dur - cfg.start_margin_s)
    start = rng.uniform(t_lo, t_hi)
    return ContactEvent(region, point.copy(),
                        mag * np.array([np.cos(theta), np.sin(theta)]), start, dur)


# ---------------------------------------------------------------------------
# observation construction

@dataclass(frozen=True)
class ObservationConfig:
    w_q: float = 1.0
    w_qd: float = 0.05
    w_omega: float = 0.2
    w_g: float = 1.0
    w_tau: float = 1.0
    dq_ref: float = 0.3      # rad, impedance torque reference deflection
    dqd_ref: float = 1.0     # rad/s
    eps_norm: float = 1e-3


@dataclass(frozen=True)
class ObsLayout:
    """Slices of the token vector per channel group."""

    n: int

    @property
    def dim(self) -> int:
        return 3 * self.n + 3

    @property
    def q(self) -> slice:
        return slice(0, self.n)

    @property
    def qd(self) -> slice:
        return slice(self.n, 2 * self.n)

    @property
    def omega(self) -> slice:
        return slice(2 * self.n, 2 * self.n + 1)

    @property
    def gdir(self) -> slice:
        return slice(2 * self.n + 1, 2 * self.n + 3)

    @property
    def tau(self) -> slice:
        return slice(2 * self.n + 3, 3 * self.n + 3)


def impedance_normalized_torque(tau, kp, kd, dq_ref, dqd_ref, eps_norm):
    """tau_i / (kp_i * dq_ref + kd_i * dqd_ref + eps)."""
    return np.asarray(tau) / (np.asarray(kp) * dq_ref + np.asarray(kd) * dqd_ref + eps_norm)


def gravity_direction(pitch):
    """World gravity direction expressed in the base frame: rotate (0, -1)
    by -pitch -> (-sin(pitch), -cos(pitch))."""
    pitch = np.asarray(pitch)
    return np.stack([-np.sin(pitch), -np.cos(pitch)], axis=-1)


def build_observation(q_joint, qd_joint, pitch, pitch_rate, tau, q_default,
                      gains: PDGains, tier: ctl.ControllerTier,
                      cfg: ObservationConfig) -> np.ndarray:
    """One normalized token, concatenated as [q~, qd, omega, gdir, tau^].

    Torque normalization uses the effective (tier-scaled) controller gains so
    tokens are comparable across controllers of different stiffness.
    """
    gs = tier.gain_scale
    tau_hat = impedance_normalized_torque(tau, gains.kp * gs, gains.kd * gs,
                                          cfg.dq_ref, cfg.dqd_ref, cfg.eps_norm)
    return np.concatenate([
        cfg.w_q * (np.asarray(q_joint) - np.asarray(q_default)),
        cfg.w_qd * np.asarray(qd_joint),
        [cfg.w_omega * pitch_rate],
        cfg.w_g * gravity_direction(pitch),
        cfg.w_tau * tau_hat,
    ])


def rollout_tokens(rollout: Rollout, model: RobotModel, gains: PDGains,
                   tier: ctl.ControllerTier, cfg: ObservationConfig) -> np.ndarray:
    """(T, obs_dim) tokens for a whole rollout (vectorized build_observation)."""
    gs = tier.gain_scale
    tau_hat = impedance_normalized_torque(rollout.tau, gains.kp * gs, gains.kd * gs,
                                          cfg.dq_ref, cfg.dqd_ref, cfg.eps_norm)
    return np.concatenate([
        cfg.w_q * (rollout.q_joint - model.q_default_rad),
        cfg.w_qd * rollout.qd_joint,
        cfg.w_omega * rollout.base_pitch_rate[:, None],
        cfg.w_g * gravity_direction(rollout.base_pitch),
        cfg.w_tau * tau_hat,
    ], axis=1)


# ---------------------------------------------------------------------------
# windows, records, class balancing

@dataclass
class DatasetRecord:
    obs: np.ndarray     # (H, obs_dim) f32
    wrench: np.ndarray  # (H, N, w) f32, base frame
    mask: np.ndarray    # (H, N) f32 in {0, 1}

    @property
    def positive(self) -> bool:
        return bool(np.any(self.mask > 0))


def windowize(rollout: Rollout, h_win: int, stride: int, model: RobotModel,
              gains: PDGains, tier: ctl.ControllerTier,
              cfg: ObservationConfig) -> list[DatasetRecord]:
    """Sliding windows over one rollout; the wrench chunk is aligned frame by
    frame with the observation window, and a window is positive iff any of
    its frames carries a nonzero contact."""
    T = len(rollout)
    if T < h_win:
        raise ValueError(f"rollout too short: {T} frames < window {h_win}")
    tokens = rollout_tokens(rollout, model, gains, tier, cfg).astype(np.float32)
    wrench = rollout.gt_wrench.astype(np.float32)
    mask = (np.linalg.norm(rollout.gt_wrench, axis=-1) > 0).astype(np.float32)
    out = []
    for start in range(0, T - h_win + 1, stride):
        sl = slice(start, start + h_win)
        out.append(DatasetRecord(tokens[sl].copy(), wrench[sl].copy(), mask[sl].copy()))
    return out


@dataclass
class DatasetHeader:
    h_win: int
    n_regions: int
    wrench_dim: int
    obs_dim: int
    count: int
    positive_count: int
    sampler_config_hash: str
    model_hash: str
    seed: int
    source: str = "sim"            # reserved: "sensor" for instrumented data
    positives_repeated: bool = False
    multi_contact: bool = False    # set by the multi-contact test generator

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @staticmethod
    def from_json(blob: str) -> "DatasetHeader":
        d = json.loads(blob)
        return DatasetHeader(**d)


def assemble_dataset(clips: list[DatasetRecord], rng: np.random.Generator,
                     ratio: tuple[int, int] = (1, 4),
                     repeat_positives: bool = False) -> tuple[list[DatasetRecord], bool]:
    """Balance clips to an exact positive:negative ratio and shuffle.

    Default mode subsamples negatives down to ratio; with `repeat_positives`
    all negatives are kept and positives are repeated cyclically instead.
    Returns (records, positives_repeated_flag).
    """
    pos = [c for c in clips if c.positive]
    neg = [c for c in clips if not c.positive]
    if not pos:
        raise ValueError("no positive clips")
    if not neg:
        raise ValueError("no negative clips")
    p, q = ratio
    want_neg = (len(pos) * q) // p
    repeated = False
    if len(neg) >= want_neg and not repeat_positives:
        idx = rng.permutation(len(neg))[:want_neg]
        neg = [neg[i] for i in sorted(idx)]
    elif repeat_positives:
        want_pos = (len(neg) * p) // q
        if want_pos == 0:
            raise ValueError("no negative clips to balance against")
        reps = [pos[i % len(pos)] for i in range(want_pos)]
        repeated = want_pos > len(pos)
        pos = reps
        neg = neg[: (len(pos) * q) // p]
    else:
        raise ValueError(
            f"negative class exhausted ({len(neg)} < {want_neg} needed for "
            f"{p}:{q}) and positive repetition disabled")
    records = pos + neg
    order = rng.permutation(len(records))
    return [records[i] for i in order], repeated


# ---------------------------------------------------------------------------
# domain randomization and noise injection

@dataclass(frozen=True)
class DomainRandomizationConfig:
    """Multiplicative ranges (must contain 1); damping is additive."""

    mass_scale: tuple[float, float] = (0.9, 1.1)
    inertia_scale: tuple[float, float] = (0.9, 1.1)
    torque_limit_scale: tuple[float, float] = (0.9, 1.1)
    joint_damping_max: float = 0.2   # N*m*s/rad, additive U[0, max]
    ground_mu_scale: tuple[float, float] = (0.8, 1.2)

    def __post_init__(self):
        for name in ("mass_scale", "inertia_scale", "torque_limit_scale", "ground_mu_scale"):
            lo, hi = getattr(self, name)
            if not (lo <= 1.0 <= hi):
                raise ValueError(f"{name} must contain 1, got ({lo}, {hi})")
            if lo <= 0:
                raise ValueError(f"{name} lower bound must be positive, got {lo}")


def domain_randomize(model: RobotModel, rng: np.random.Generator,
                     ranges: DomainRandomizationConfig) -> RobotModel:
    """Randomized copy of the model; invariants are re-validated."""
    bodies = tuple(
        dataclasses.replace(
            b,
            mass_kg=b.mass_kg * rng.uniform(*ranges.mass_scale),
            inertia_kgm2=b.inertia_kgm2 * rng.uniform(*ranges.inertia_scale),
        )
        for b in model.bodies
    )
    joints = tuple(
        dataclasses.replace(
            j,
            torque_limit_nm=j.torque_limit_nm * rng.uniform(*ranges.torque_limit_scale),
            viscous_damping_nms=j.viscous_damping_nms + rng.uniform(0.0, ranges.joint_damping_max),
        )
        for j in model.joints
    )
    out = dataclasses.replace(model, bodies=bodies, joints=joints)
    out.validate()
    return out


def randomize_ground(cfg: GroundContactConfig, rng: np.random.Generator,
                     ranges: DomainRandomizationConfig) -> GroundContactConfig:
    return dataclasses.replace(cfg, friction=cfg.friction * rng.uniform(*ranges.ground_mu_scale))


def domain_scales(rng: np.random.Generator, n_episodes: int, model: RobotModel,
                  ranges: DomainRandomizationConfig) -> DomainScales:
    """Per-episode randomization arrays for the batch episode runner
    (equivalent to domain_randomize applied per episode)."""
    nb, n = len(model.bodies), model.n
    return DomainScales(
        mass=rng.uniform(*ranges.mass_scale, size=(n_episodes, nb)),
        inertia=rng.uniform(*ranges.inertia_scale, size=(n_episodes, nb)),
        torque_limit=rng.uniform(*ranges.torque_limit_scale, size=(n_episodes, n)),
        joint_damping=rng.uniform(0.0, ranges.joint_damping_max, size=(n_episodes, n)),
        ground_mu=rng.uniform(*ranges.ground_mu_scale, size=n_episodes),
    )


@dataclass(frozen=True)
class NoiseConfig:
    """Additive Gaussian noise std per channel group, on normalized channels."""

    sigma_q: float = 0.0
    sigma_qd: float = 0.0
    sigma_omega: float = 0.0
    sigma_gdir: float = 0.0
    sigma_tau: float = 0.0

    @staticmethod
    def uniform(sigma: float) -> "NoiseConfig":
        return NoiseConfig(sigma, sigma, sigma, sigma, sigma)

    def any(self) -> bool:
        return any(s > 0 for s in (self.sigma_q, self.sigma_qd, self.sigma_omega,
                                   self.sigma_gdir, self.sigma_tau))


def inject_noise(window: np.ndarray, noise: NoiseConfig, rng: np.random.Generator,
                 layout: ObsLayout) -> np.ndarray:
    """Per-scalar Gaussian noise grouped by channel; the gravity-direction
    sub-vector is renormalized to unit length afterwards."""
    out = np.array(window, dtype=window.dtype, copy=True)
    if not noise.any():
        return out
    for sl, sigma in ((layout.q, noise.sigma_q), (layout.qd, noise.sigma_qd),
                      (layout.omega, noise.sigma_omega), (layout.gdir, noise.sigma_gdir),
                      (layout.tau, noise.sigma_tau)):
        if sigma > 0:
            out[..., sl] += rng.normal(0.0, sigma, size=out[..., sl].shape).astype(out.dtype)
    g = out[..., layout.gdir]
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    out[..., layout.gdir] = np.where(norm > 0, g / norm, g)
    return out


# ---------------------------------------------------------------------------
# binary IO

def write_dataset(path, header: DatasetHeader, records: list[DatasetRecord]) -> None:
    if header.count != len(records):
        raise DatasetFormatError(
            f"header count {header.count} != record count {len(records)}")
    blob = header.to_json().encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for r in records:
            f.write(np.ascontiguousarray(r.obs, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(r.wrench, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(r.mask, dtype="<f4").tobytes())


def read_dataset(path) -> tuple[DatasetHeader, list[DatasetRecord]]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise DatasetFormatError(f"unsupported dataset version {version}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = DatasetHeader.from_json(f.read(hlen).decode("utf-8"))
        H, N, w, D = header.h_win, header.n_regions, header.wrench_dim, header.obs_dim
        rec_floats = H * D + H * N * w + H * N
        body = f.read()
    data = np.frombuffer(body, dtype="<f4")
    if data.size != header.count * rec_floats:
        found = data.size // rec_floats
        raise DatasetFormatError(
            f"truncated dataset: header says {header.count} records, found {found}")
    records = []
    for i in range(header.count):
        rec = data[i * rec_floats:(i + 1) * rec_floats]
        obs = rec[: H * D].reshape(H, D).copy()
        wrench = rec[H * D: H * D + H * N * w].reshape(H, N, w).copy()
        mask = rec[H * D + H * N * w:].reshape(H, N).copy()
        records.append(DatasetRecord(obs, wrench, mask))
    return header, records


# ---------------------------------------------------------------------------
# end-to-end generation pipeline

@dataclass(frozen=True)
class GenerationConfig:
    n_episodes: int
    episode_s: float = 8.0
    h_win: int = 50
    stride: int = 10
    batch_size: int = 256
    events_per_episode: int = 1
    tier: str = "good"
    seed: int = 0
    domain_randomization: bool = False
    ratio: tuple[int, int] = (1, 4)
    repeat_positives: bool = False


def generate_records(model: RobotModel, gains: PDGains, gen: GenerationConfig,
                     sampler: ContactSamplerConfig | None = None,
                     obs_cfg: ObservationConfig | None = None,
                     sim: SimConfig | None = None,
                     dr: DomainRandomizationConfig | None = None,
                     events_override=None, q_target=None,
                     progress=None) -> tuple[DatasetHeader, list[DatasetRecord]]:
    """Simulate episodes in batches, windowize, balance, and shuffle.

    Episode e draws its events from default_rng([seed, e, 1]) and its initial
    perturbation from seed + e, so the dataset is a pure function of the
    configuration. `events_override(e, rng)` replaces the single-event sampler
    (used by the multi-contact test generator)."""
    sampler = sampler or ContactSamplerConfig()
    obs_cfg = obs_cfg or ObservationConfig()
    sim = sim or SimConfig()
    tier = ctl.TIERS[gen.tier]
    clips: list[DatasetRecord] = []
    n_short = 0
    max_simultaneous = 0
    for lo in range(0, gen.n_episodes, gen.batch_size):
        hi = min(lo + gen.batch_size, gen.n_episodes)
        events, seeds = [], []
        for e in range(lo, hi):
            rng_e = np.random.default_rng([gen.seed, e, 1])
            if events_override is not None:
                events.append(events_override(e, rng_e))
            else:
                events.append([sample_contact(rng_e, sampler, model, gen.episode_s)
                               for _ in range(gen.events_per_episode)])
            max_simultaneous = max(max_simultaneous, len(events[-1]))
            seeds.append(gen.seed + e)
        scales = None
        if gen.domain_randomization:
            scales = domain_scales(np.random.default_rng([gen.seed, lo, 2]),
                                   hi - lo, model, dr or DomainRandomizationConfig())
        rollouts = ctl.run_episodes_batch(model, gains, tier, events, gen.episode_s,
                                          seeds, sim, scales, q_target=q_target)
        for r in rollouts:
            if len(r) < gen.h_win:
                n_short += 1  # fell before one full window; nothing to extract
                continue
            clips.extend(windowize(r, gen.h_win, gen.stride, model, gains, tier, obs_cfg))
        if progress is not None:
            progress(hi, gen.n_episodes, len(clips))
    records, repeated = assemble_dataset(clips, np.random.default_rng([gen.seed, 3]),
                                         gen.ratio, gen.repeat_positives)
    header = DatasetHeader(
        h_win=gen.h_win,
        n_regions=model.n_regions,
        wrench_dim=model.w,
        obs_dim=ObsLayout(model.n).dim,
        count=len(records),
        positive_count=sum(r.positive for r in records),
        sampler_config_hash=sampler.content_hash(),
        model_hash=model.content_hash(),
        seed=gen.seed,
        positives_repeated=repeated,
        multi_contact=max_simultaneous > 1,
    )
    return header, records

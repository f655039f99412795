"""Contact-resilient PD posture control, episode rollouts, and the controller
robustness metrics.

The controller holds a fixed default posture with per-joint PD torques under
a torque clamp. Robustness tiers scale gains and torque limits so that the
same posture task can be run with a strong, a mediocre, or a weak controller.

Episodes run at the simulation rate (default 1 kHz) and are logged at 50 Hz.
`run_episode` is the single-episode reference path; `run_episodes_batch` is
the same physics vectorized over episodes (used for dataset generation) and
is cross-checked against the single path in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .dynamics import (GeneralizedState, GroundContactConfig, KinematicTables,
                       fk_batch, vel_batch, _com_world, _rot,
                       mass_matrix_batch, rnea_batch, gen_force_point_batch,
                       ground_forces_batch)
from .robotmodel import RobotModel, cross2

__all__ = [
    "PDGains",
    "ControllerTier",
    "TIERS",
    "ContactEvent",
    "Rollout",
    "RobustnessReport",
    "SimConfig",
    "default_gains",
    "standing_state",
    "pd_torques",
    "run_episode",
    "run_episodes_batch",
    "robustness_metrics",
]

LOG_HZ = 50


@dataclass(frozen=True)
class PDGains:
    kp: np.ndarray  # (n,) N*m/rad
    kd: np.ndarray  # (n,) N*m*s/rad

    def __post_init__(self):
        if np.any(np.asarray(self.kp) <= 0) or np.any(np.asarray(self.kd) < 0):
            raise ValueError("PD gains must satisfy kp > 0, kd >= 0")


@dataclass(frozen=True)
class ControllerTier:
    label: str
    gain_scale: float
    torque_limit_scale: float


TIERS = {
    "good": ControllerTier("good", 1.0, 1.0),
    "fair": ControllerTier("fair", 0.5, 0.8),
    "poor": ControllerTier("poor", 0.25, 0.6),
}


@dataclass(frozen=True)
class ContactEvent:
    """An external push: constant world-frame force applied at a body-fixed
    surface point of one region for a finite duration."""

    region_index: int          # 1-based
    point_local: np.ndarray    # (2,) body frame of the region's host body
    force_world: np.ndarray    # (2,) N
    start_s: float
    duration_s: float

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass
class Rollout:
    """50 Hz log of one episode. Proprioceptive channels first; the base
    position/velocity and ground-reaction fields are privileged simulator
    state used only by the analytical baselines."""

    t: np.ndarray                 # (T,)
    q_joint: np.ndarray           # (T, n)
    qd_joint: np.ndarray          # (T, n)
    tau: np.ndarray               # (T, n) applied (post-clamp) torques
    base_pitch: np.ndarray        # (T,)
    base_pitch_rate: np.ndarray   # (T,)
    base_pos: np.ndarray          # (T, 2) privileged
    base_vel: np.ndarray          # (T, 2) privileged
    gt_wrench: np.ndarray         # (T, N, w) region wrench field, base frame
    grf_gen: np.ndarray           # (T, b+n) privileged ground-reaction generalized force
    posture_err: np.ndarray       # (T,) ||q_joint - q_default||_2
    violation: np.ndarray         # (T,) sum_i max(0, |tau_unclamped_i| - limit_i)
    fall: bool
    events: tuple[ContactEvent, ...]
    tier_label: str
    seed: int
    sample_hz: int = LOG_HZ

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class RobustnessReport:
    sr: float            # fraction of rollouts that do not fall
    itae_mean: float     # time-weighted posture error integral, rad*s^2
    viomag_mean: float   # mean torque-limit violation magnitude, N*m
    rvr: float           # fraction of rollouts with a finite recovery time


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    ground: GroundContactConfig = field(default_factory=GroundContactConfig)
    init_perturb_rad: float = 0.02  # uniform initial joint offset, seeded


@dataclass(frozen=True)
class DomainScales:
    """Per-episode multiplicative randomization applied inside the batch
    runner; produced by datagen's domain randomization."""

    mass: np.ndarray          # (E, n_bodies)
    inertia: np.ndarray       # (E, n_bodies)
    torque_limit: np.ndarray  # (E, n)
    joint_damping: np.ndarray  # (E, n) additive N*m*s/rad
    ground_mu: np.ndarray     # (E,)


def default_gains(model: RobotModel) -> PDGains:
    """Nominal tier gains for the standing task, keyed by joint name."""
    kp = np.zeros(model.n)
    kd = np.zeros(model.n)
    for j in model.joints:
        if "shoulder" in j.name:
            kp[j.joint_id], kd[j.joint_id] = 100.0, 7.0
        else:  # hips and knees carry the crouch
            kp[j.joint_id], kd[j.joint_id] = 300.0, 22.0
    return PDGains(kp, kd)


def standing_state(model: RobotModel, settle_penetration: bool = True) -> GeneralizedState:
    """Default-posture state with the lowest foot point on the ground."""
    kin = KinematicTables.from_model(model)
    qb = np.array([0.0, 0.0, 0.0])
    ang, pos = fk_batch(kin, qb, model.q_default_rad)
    z_min = math.inf
    for k in range(len(kin.contact_body)):
        body = int(kin.contact_body[k])
        p = pos[body] + _rot(ang[body], kin.contact_local[k])
        z_min = min(z_min, p[1])
    if not math.isfinite(z_min):  # no declared foot points (flight-only models)
        z_min = float(min(0.0, pos[:, 1].min()))
    height = -z_min
    if settle_penetration:
        # preload the ground springs with the robot weight to soften the initial transient
        n_pts = max(1, len(kin.contact_body))
        height -= model.total_mass * dyn.GRAVITY / (n_pts * GroundContactConfig().stiffness)
    return GeneralizedState(0.0, np.array([0.0, height, 0.0]),
                            model.q_default_rad.copy(), np.zeros(model.nv))


def pd_torques(model: RobotModel, state: GeneralizedState, gains: PDGains,
               tier: ControllerTier) -> np.ndarray:
    """tau_i = clamp(gs*kp_i*(q_default_i - q_i) - gs*kd_i*qd_i, +-limit_i*tls)."""
    tau, _ = _pd_batch(state.q_joint, state.v[3:], model.q_default_rad, gains, tier,
                       np.array([j.torque_limit_nm for j in model.joints]))
    return tau


def _pd_batch(q_joint, qd_joint, q_default, gains: PDGains, tier: ControllerTier,
              limits):
    gs = tier.gain_scale
    raw = gs * gains.kp * (q_default - q_joint) - gs * gains.kd * qd_joint
    lim = limits * tier.torque_limit_scale
    return np.clip(raw, -lim, lim), raw


def _event_arrays(model: RobotModel, events_per_episode, n_slots=None):
    """Pack per-episode event lists into rectangular arrays for the batch
    runner; inactive slots have zero force and contribute nothing."""
    E = len(events_per_episode)
    K = n_slots or max((len(ev) for ev in events_per_episode), default=0)
    K = max(K, 1)
    body = np.zeros((E, K), dtype=int)
    region = np.zeros((E, K), dtype=int)
    point = np.zeros((E, K, 2))
    force = np.zeros((E, K, 2))
    t0 = np.full((E, K), np.inf)
    t1 = np.full((E, K), -np.inf)
    for e, evs in enumerate(events_per_episode):
        for k, ev in enumerate(evs):
            region[e, k] = ev.region_index
            body[e, k] = model.region(ev.region_index).body_id
            point[e, k] = ev.point_local
            force[e, k] = ev.force_world
            t0[e, k] = ev.start_s
            t1[e, k] = ev.end_s
    return body, region, point, force, t0, t1


def run_episodes_batch(model: RobotModel, gains: PDGains, tier: ControllerTier,
                       events_per_episode: list[list[ContactEvent]], duration: float,
                       seeds, sim: SimConfig | None = None,
                       scales: DomainScales | None = None,
                       q_target: np.ndarray | None = None) -> list[Rollout]:
    """Simulate many episodes in lockstep. Fallen episodes freeze in place and
    their logs are truncated at the fall frame. `q_target` overrides the PD
    posture target (the "command"); posture error is always measured against
    the model default."""
    sim = sim or SimConfig()
    q_target = model.q_default_rad if q_target is None else np.asarray(q_target, dtype=float)
    kin = KinematicTables.from_model(model)
    E = len(events_per_episode)
    n, nv, N = model.n, model.nv, model.n_regions
    steps_per_frame = int(round(1.0 / (LOG_HZ * sim.dt)))
    n_frames = int(round(duration * LOG_HZ))
    seeds = np.asarray(seeds, dtype=np.uint64)
    if seeds.shape != (E,):
        raise ValueError(f"need {E} seeds, got shape {seeds.shape}")

    masses = kin.masses[None, :].repeat(E, 0)
    inertias = kin.inertias[None, :].repeat(E, 0)
    limits = np.array([j.torque_limit_nm for j in model.joints])[None, :].repeat(E, 0)
    damping = kin.damping[None, :].repeat(E, 0)
    mu_scale = np.ones(E)
    if scales is not None:
        masses = masses * scales.mass
        inertias = inertias * scales.inertia
        limits = limits * scales.torque_limit
        damping = damping + scales.joint_damping
        mu_scale = scales.ground_mu

    s0 = standing_state(model)
    qb = np.tile(s0.q_base, (E, 1))
    qj = np.tile(q_target, (E, 1))
    v = np.zeros((E, nv))
    for e in range(E):  # seeded initial posture perturbation
        rng = np.random.default_rng(int(seeds[e]))
        qj[e] += rng.uniform(-sim.init_perturb_rad, sim.init_perturb_rad, size=n)

    ev_body, ev_region, ev_point, ev_force, ev_t0, ev_t1 = _event_arrays(model, events_per_episode)
    K = ev_body.shape[1]

    alive = np.ones(E, dtype=bool)
    fall_frame = np.full(E, -1, dtype=int)
    region_com = np.array([model.region(i + 1).com_m for i in range(N)])
    region_body = np.array([model.region(i + 1).body_id for i in range(N)])

    logs = {k: np.zeros((E, n_frames) + shp) for k, shp in {
        "q_joint": (n,), "qd_joint": (n,), "tau": (n,), "base_pitch": (),
        "base_pitch_rate": (), "base_pos": (2,), "base_vel": (2,),
        "gt_wrench": (N, 3), "grf_gen": (nv,), "posture_err": (), "violation": ()}.items()}

    min_h = model.fall_thresholds.min_base_height_m
    max_p = model.fall_thresholds.max_pitch_rad
    for frame in range(n_frames):
        t = frame / LOG_HZ  # exact frame grid; no float accumulation drift
        # ---- log current state
        ang, pos = fk_batch(kin, qb, qj)
        om, lv = vel_batch(kin, ang, pos, v)
        tau_c, tau_raw = _pd_batch(qj, v[:, 3:], q_target, gains, tier, limits)
        grf_gen, _ = ground_forces_batch(kin, ang, pos, om, lv, sim.ground, mu_scale)
        active = (t >= ev_t0) & (t < ev_t1)  # (E, K)
        wfield = np.zeros((E, N, 3))
        for k in range(K):
            f = ev_force[:, k] * active[:, k, None]
            p_w = dyn.point_world_batch(kin, ang, pos, ev_body[:, k], ev_point[:, k])
            c_w = np.take_along_axis(_com_world(kin, ang, pos),
                                     ev_body[:, k, None, None].repeat(2, -1), -2)[:, 0, :]
            tau_y = cross2(p_w - c_w, f)
            pitch = qb[:, 2]
            f_base = _rot(-pitch, f)  # wrench stored in the robot base frame
            slot = np.maximum(ev_region[:, k] - 1, 0)
            onehot = (np.arange(N)[None, :] == slot[:, None]) & active[:, k, None]
            wfield[:, :, 0] += onehot * f_base[:, 0, None]
            wfield[:, :, 1] += onehot * f_base[:, 1, None]
            wfield[:, :, 2] += onehot * tau_y[:, None]
        logs["q_joint"][:, frame] = qj
        logs["qd_joint"][:, frame] = v[:, 3:]
        logs["tau"][:, frame] = tau_c
        logs["base_pitch"][:, frame] = qb[:, 2]
        logs["base_pitch_rate"][:, frame] = v[:, 2]
        logs["base_pos"][:, frame] = qb[:, :2]
        logs["base_vel"][:, frame] = v[:, :2]
        logs["gt_wrench"][:, frame] = wfield
        logs["grf_gen"][:, frame] = grf_gen
        logs["posture_err"][:, frame] = np.linalg.norm(qj - model.q_default_rad, axis=1)
        logs["violation"][:, frame] = np.sum(
            np.maximum(0.0, np.abs(tau_raw) - limits * tier.torque_limit_scale), axis=1)

        # ---- fall detection on the logged frame
        fallen_now = alive & ((qb[:, 1] < min_h) | (np.abs(qb[:, 2]) > max_p))
        fall_frame[fallen_now] = frame
        alive &= ~fallen_now

        # ---- integrate to the next frame
        for sub in range(steps_per_frame):
            t_sub = frame / LOG_HZ + sub * sim.dt
            ang, pos = fk_batch(kin, qb, qj)
            om, lv = vel_batch(kin, ang, pos, v)
            tau_c, _ = _pd_batch(qj, v[:, 3:], q_target, gains, tier, limits)
            gf, _ = ground_forces_batch(kin, ang, pos, om, lv, sim.ground, mu_scale)
            active = (t_sub >= ev_t0) & (t_sub < ev_t1)
            for k in range(K):
                f = ev_force[:, k] * active[:, k, None]
                if not np.any(active[:, k]):
                    continue
                p_w = dyn.point_world_batch(kin, ang, pos, ev_body[:, k], ev_point[:, k])
                gf += gen_force_point_batch(kin, pos, ev_body[:, k], p_w, f)
            h = rnea_batch(kin, ang, pos, v, np.zeros((E, nv)), masses=masses,
                           inertias=inertias)
            H = mass_matrix_batch(kin, ang, pos, masses, inertias)
            rhs = gf - h
            rhs[:, 3:] += tau_c - damping * v[:, 3:]
            a = np.linalg.solve(H, rhs[..., None])[..., 0]
            v_new = v + a * sim.dt
            qb_new = qb + v_new[:, :3] * sim.dt
            qj_new = qj + v_new[:, 3:] * sim.dt
            v = np.where(alive[:, None], v_new, v)
            qb = np.where(alive[:, None], qb_new, qb)
            qj = np.where(alive[:, None], qj_new, qj)
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(qb)):
            raise dyn.SimulationDivergenceError(f"batch simulation diverged at t={t:.4f}s")

    rollouts = []
    tgrid = np.arange(n_frames) / LOG_HZ
    for e in range(E):
        end = n_frames if fall_frame[e] < 0 else fall_frame[e] + 1
        rollouts.append(Rollout(
            t=tgrid[:end].copy(),
            q_joint=logs["q_joint"][e, :end].copy(),
            qd_joint=logs["qd_joint"][e, :end].copy(),
            tau=logs["tau"][e, :end].copy(),
            base_pitch=logs["base_pitch"][e, :end].copy(),
            base_pitch_rate=logs["base_pitch_rate"][e, :end].copy(),
            base_pos=logs["base_pos"][e, :end].copy(),
            base_vel=logs["base_vel"][e, :end].copy(),
            gt_wrench=logs["gt_wrench"][e, :end].copy(),
            grf_gen=logs["grf_gen"][e, :end].copy(),
            posture_err=logs["posture_err"][e, :end].copy(),
            violation=logs["violation"][e, :end].copy(),
            fall=bool(fall_frame[e] >= 0),
            events=tuple(events_per_episode[e]),
            tier_label=tier.label,
            seed=int(seeds[e]),
        ))
    return rollouts


def run_episode(model: RobotModel, gains: PDGains, tier: ControllerTier,
                contact_events: list[ContactEvent], duration: float, seed: int,
                sim: SimConfig | None = None) -> Rollout:
    """Single episode: deterministic given (model, gains, tier, events, seed)."""
    if duration <= 0:
        raise ValueError("duration must be > 0")
    return run_episodes_batch(model, gains, tier, [list(contact_events)], duration,
                              [seed], sim)[0]


def robustness_metrics(rollouts: list[Rollout], eps: float = 0.05,
                       recovery_window: int = 25) -> RobustnessReport:
    """Success rate, time-weighted error, violation magnitude, recovery rate."""
    if not rollouts:
        raise ValueError("robustness_metrics needs at least one rollout")
    dt = 1.0 / rollouts[0].sample_hz
    sr = float(np.mean([not r.fall for r in rollouts]))
    itae = float(np.mean([np.sum(np.arange(len(r)) * dt * r.posture_err * dt)
                          for r in rollouts]))
    viomag = float(np.mean([np.mean(r.violation) if len(r) else 0.0 for r in rollouts]))
    recovered = []
    for r in rollouts:
        ok = r.posture_err <= eps
        t_rec = None
        for k in range(len(r) - recovery_window + 1):
            if np.all(ok[k:k + recovery_window]):
                t_rec = k
                break
        recovered.append(t_rec is not None and not r.fall)
    rvr = float(np.mean(recovered))
    return RobustnessReport(sr=sr, itae_mean=itae, viomag_mean=viomag, rvr=rvr)

"""Contact particle filter over region hypotheses.

Each particle hypothesizes a set of contact regions of known cardinality.
Per filter step the particle's wrenches are fit by least squares against the
momentum residual, and the particle is weighted by the Gaussian likelihood of
its reprojection error. Systematic resampling triggers when the effective
sample size drops below half the particle count, and a fixed fraction of
particles is re-proposed uniformly every step so lost modes can be recovered.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .. import dynamics as dyn
from ..robotmodel import RobotModel, region_jacobian
from .gmo import MomentumObserver
from .records import PredictionRecord

__all__ = ["ParticleSet", "cpf_step", "ContactParticleFilter", "systematic_resample"]


@dataclass
class ParticleSet:
    hypotheses: np.ndarray   # (P, k) region indices, 1-based, sorted per row
    weights: np.ndarray      # (P,) nonnegative, sums to 1
    wrenches: np.ndarray     # (P, k, w) least-squares wrench per hypothesized region

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights ** 2))

    def region_posterior(self, n_regions: int) -> np.ndarray:
        """Per-region probability: total weight of particles containing it."""
        post = np.zeros(n_regions)
        for i in range(n_regions):
            post[i] = self.weights[np.any(self.hypotheses == i + 1, axis=1)].sum()
        return np.clip(post, 0.0, 1.0)


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic (low-variance) resampling; returns chosen indices."""
    P = len(weights)
    positions = (rng.random() + np.arange(P)) / P
    cum = np.cumsum(weights)
    cum[-1] = 1.0  # guard against round-off
    return np.searchsorted(cum, positions)


def _init_particles(model: RobotModel, rng: np.random.Generator, n_particles: int,
                    n_contacts: int) -> np.ndarray:
    combos = np.array(list(itertools.combinations(range(1, model.n_regions + 1), n_contacts)))
    picks = rng.integers(len(combos), size=n_particles)
    return combos[picks]


def cpf_step(particles: ParticleSet, model: RobotModel, sim_state: dyn.GeneralizedState,
             r: np.ndarray, rng: np.random.Generator, sigma_lik: float = 0.5,
             n_contacts: int = 1, rejuvenate_frac: float = 0.1,
             resample_threshold: float = 0.5) -> ParticleSet:
    """One measurement update against residual r."""
    P, k = particles.hypotheses.shape
    if k != n_contacts:
        raise ValueError(f"particle cardinality {k} != n_contacts {n_contacts}")
    hyp = particles.hypotheses.copy()
    # rejuvenation: re-propose a fixed fraction uniformly
    n_rej = int(np.floor(rejuvenate_frac * P))
    if n_rej:
        idx = rng.choice(P, size=n_rej, replace=False)
        hyp[idx] = _init_particles(model, rng, n_rej, n_contacts)

    # least-squares wrench fit per unique hypothesis (shared across particles)
    jac_t = {i: region_jacobian(model, sim_state, i).J.T for i in range(1, model.n_regions + 1)}
    uniq: dict[tuple, tuple[np.ndarray, float]] = {}
    for row in map(tuple, hyp):
        if row in uniq:
            continue
        A = np.hstack([jac_t[i] for i in row])          # (nv, k*w)
        f, _, _, _ = np.linalg.lstsq(A, r, rcond=None)
        err = float(np.linalg.norm(A @ f - r))
        uniq[row] = (f.reshape(k, model.w), err)

    wrenches = np.zeros((P, k, model.w))
    errs = np.zeros(P)
    for p_i, row in enumerate(map(tuple, hyp)):
        wrenches[p_i], errs[p_i] = uniq[row]
    log_lik = -(errs ** 2) / (2.0 * sigma_lik ** 2)
    log_w = np.log(np.maximum(particles.weights, 1e-300)) + log_lik
    log_w -= log_w.max()
    w = np.exp(log_w)
    w /= w.sum()

    out = ParticleSet(hyp, w, wrenches)
    if out.ess < resample_threshold * P:
        idx = systematic_resample(w, rng)
        out = ParticleSet(hyp[idx].copy(), np.full(P, 1.0 / P), wrenches[idx].copy())
    return out


class ContactParticleFilter:
    """Stateful per-stream filter consuming momentum residuals."""

    def __init__(self, model: RobotModel, rng: np.random.Generator,
                 n_particles: int = 200, n_contacts: int = 1, sigma_lik: float = 0.5):
        self.model = model
        self.rng = rng
        self.n_contacts = n_contacts
        self.sigma_lik = sigma_lik
        hyp = _init_particles(model, rng, n_particles, n_contacts)
        self.particles = ParticleSet(hyp, np.full(n_particles, 1.0 / n_particles),
                                     np.zeros((n_particles, n_contacts, model.w)))

    def step(self, sim_state: dyn.GeneralizedState, r: np.ndarray) -> ParticleSet:
        self.particles = cpf_step(self.particles, self.model, sim_state, r, self.rng,
                                  self.sigma_lik, self.n_contacts)
        return self.particles


def run_clip(model: RobotModel, q_base, q_joint, v, tau, grf_gen, dt,
             rng: np.random.Generator, n_particles: int = 200, n_contacts: int = 1,
             sigma_lik: float = 0.5, gain: float = 50.0) -> PredictionRecord:
    """Momentum residual + particle filtering over one logged clip.

    The per-region mask is the particle posterior; the reported wrench per
    region is the weight-averaged fit over particles hypothesizing it,
    expressed in the robot base frame."""
    H = len(q_base)
    N, w = model.n_regions, model.w
    observer = MomentumObserver(model, gain)
    cpf = ContactParticleFilter(model, rng, n_particles, n_contacts, sigma_lik)
    mask = np.zeros((H, N))
    wrench = np.zeros((H, N, w))
    for kf in range(H):
        st = dyn.GeneralizedState(kf * dt, q_base[kf], q_joint[kf], v[kf])
        r = observer.update(st, tau[kf], dt, tau_known=grf_gen[kf])
        ps = cpf.step(st, r)
        mask[kf] = ps.region_posterior(N)
        pitch = st.q_base[2]
        c, s = np.cos(-pitch), np.sin(-pitch)
        for i in range(1, N + 1):
            sel = np.any(ps.hypotheses == i, axis=1)
            if not np.any(sel):
                continue
            wsum = ps.weights[sel].sum()
            if wsum <= 0:
                continue
            rows = np.where(sel)[0]
            acc = np.zeros(w)
            for p_i in rows:
                slot = int(np.where(ps.hypotheses[p_i] == i)[0][0])
                acc += ps.weights[p_i] * ps.wrenches[p_i, slot]
            f = acc / wsum
            wrench[kf, i - 1] = np.array([c * f[0] - s * f[1], s * f[0] + c * f[1], f[2]])
    return PredictionRecord(mask, wrench, "cpf")

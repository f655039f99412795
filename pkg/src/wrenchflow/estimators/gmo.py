"""Generalized momentum observer: residual estimation and region localization.

The observer integrates

    r(t) = K_O [ p(t) - p(0) - int_0^t ( S^T tau_m + Hdot v - h + tau_known + r ) ds ]

with p = H(q) v the generalized momentum and h = C v + g the zero-acceleration
bias from the dynamics module; Hdot v is formed by differencing consecutive
mass matrices, which makes Hdot v - h the discrete stand-in for C^T v - g.
The residual then obeys dr/dt = K_O (tau_ext - r): a first-order filter whose
output converges to the external generalized force with time constant 1/K_O.

`tau_known` carries generalized forces the observer is told about; in
simulation the baselines receive the true ground-reaction generalized force
there, so the residual isolates the non-foot contact wrench.

Localization projects the residual onto each region: solve
f_i = argmin ||J_i^T f - r||^2 per region and score regions by reprojection
error. The mask is a softmin over errors at a fixed force scale sigma_r, so a
near-zero residual yields a near-uniform (sub-threshold) mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import dynamics as dyn
from ..robotmodel import RobotModel, region_jacobian
from .records import PredictionRecord

__all__ = ["MomentumObserverState", "MomentumObserver", "gmo_update",
           "gmo_localize", "LocalizationResult"]


@dataclass
class MomentumObserverState:
    gain: np.ndarray          # (nv,) diagonal observer gain, 1/s
    integral: np.ndarray      # (nv,) accumulated integrand
    r: np.ndarray             # (nv,) current residual
    p0: np.ndarray | None     # initial momentum
    H_prev: np.ndarray | None

    def __post_init__(self):
        if np.any(self.gain <= 0):
            raise ValueError("observer gain entries must be > 0")


def gmo_update(state: MomentumObserverState, model: RobotModel,
               sim_state: dyn.GeneralizedState, tau_m: np.ndarray, dt: float,
               tau_known: np.ndarray | None = None) -> np.ndarray:
    """Advance the observer by one sample of (q, v, tau) and return r."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    H = dyn.mass_matrix(model, sim_state).H
    h = dyn.bias_forces(model, sim_state).h
    p = H @ sim_state.v
    nv = model.nv
    if state.p0 is None:
        state.p0 = p
        state.H_prev = H
        state.integral = np.zeros(nv)
        state.r = np.zeros(nv)
        return state.r
    hdot_v = (H - state.H_prev) / dt @ sim_state.v
    integrand = -h + hdot_v + state.r
    integrand[3:] += np.asarray(tau_m, dtype=float)
    kin = dyn.KinematicTables.from_model(model)
    integrand[3:] -= kin.damping * sim_state.v[3:]
    if tau_known is not None:
        integrand += tau_known
    state.integral = state.integral + integrand * dt
    state.r = state.gain * (p - state.p0 - state.integral)
    state.H_prev = H
    return state.r


class MomentumObserver:
    """Stateful per-stream wrapper around gmo_update."""

    def __init__(self, model: RobotModel, gain: float | np.ndarray = 50.0):
        gain = np.full(model.nv, float(gain)) if np.isscalar(gain) else np.asarray(gain)
        self.model = model
        self.state = MomentumObserverState(gain=gain, integral=np.zeros(model.nv),
                                           r=np.zeros(model.nv), p0=None, H_prev=None)

    def update(self, sim_state: dyn.GeneralizedState, tau_m, dt, tau_known=None) -> np.ndarray:
        return gmo_update(self.state, self.model, sim_state, tau_m, dt, tau_known)

    def reset(self) -> None:
        self.state.p0 = None
        self.state.H_prev = None
        self.state.integral = np.zeros_like(self.state.integral)
        self.state.r = np.zeros_like(self.state.r)


@dataclass
class LocalizationResult:
    mask: np.ndarray        # (N,) softmin probabilities
    wrench: np.ndarray      # (N, w); nonzero only at the winning region
    best_region: int        # 1-based
    ties: list[int]         # regions within tolerance of the best fit
    skipped: list[int]      # rank-deficient regions
    fits: np.ndarray        # (N, w) per-region least-squares wrenches
    errors: np.ndarray      # (N,) reprojection error norms


def gmo_localize(model: RobotModel, sim_state: dyn.GeneralizedState, r: np.ndarray,
                 sigma_r: float = 5.0, tie_rel: float = 1e-9) -> LocalizationResult:
    """Assign a generalized residual to the region with the smallest
    least-squares reprojection error. Ties (ambiguous regions) are reported;
    the winner among ties is the lowest region index."""
    N, w = model.n_regions, model.w
    fits = np.zeros((N, w))
    errors = np.full(N, np.inf)
    skipped: list[int] = []
    for i in range(1, N + 1):
        A = region_jacobian(model, sim_state, i).J.T  # (nv, w)
        f, _, rank, _ = np.linalg.lstsq(A, r, rcond=None)
        if rank < w:
            skipped.append(i)
            continue
        fits[i - 1] = f
        errors[i - 1] = np.linalg.norm(A @ f - r)
    if np.all(np.isinf(errors)):
        raise RuntimeError("all regions rank-deficient; cannot localize")
    e_min = float(np.min(errors))
    ties = [i + 1 for i in range(N)
            if np.isfinite(errors[i]) and errors[i] - e_min <= tie_rel * max(1.0, e_min)]
    best = ties[0]
    # softmin over reprojection errors at a fixed force scale
    z = np.where(np.isfinite(errors), -(errors ** 2 - e_min ** 2) / (2.0 * sigma_r ** 2), -np.inf)
    mask = np.exp(z)
    mask = mask / mask.sum()
    wrench = np.zeros((N, w))
    pitch = sim_state.q_base[2]
    f_best = fits[best - 1]
    # report the wrench in the robot base frame like every other estimator
    c, s = np.cos(-pitch), np.sin(-pitch)
    wrench[best - 1] = np.array([c * f_best[0] - s * f_best[1],
                                 s * f_best[0] + c * f_best[1], f_best[2]])
    return LocalizationResult(mask, wrench, best, ties, skipped, fits, errors)


def run_clip(model: RobotModel, q_base: np.ndarray, q_joint: np.ndarray, v: np.ndarray,
             tau: np.ndarray, grf_gen: np.ndarray, dt: float, gain: float = 50.0,
             sigma_r: float = 5.0) -> PredictionRecord:
    """Run the observer over one logged clip and localize every frame."""
    H = len(q_base)
    obs = MomentumObserver(model, gain)
    mask = np.zeros((H, model.n_regions))
    wrench = np.zeros((H, model.n_regions, model.w))
    for k in range(H):
        st = dyn.GeneralizedState(k * dt, q_base[k], q_joint[k], v[k])
        r = obs.update(st, tau[k], dt, tau_known=grf_gen[k])
        loc = gmo_localize(model, st, r, sigma_r=sigma_r)
        mask[k] = loc.mask
        wrench[k] = loc.wrench
    return PredictionRecord(mask, wrench, "gmo")

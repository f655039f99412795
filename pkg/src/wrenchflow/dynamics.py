"""Floating-base rigid-body dynamics for planar articulated chains.

Generalized coordinates are q = [x, z, pitch, q_joint...]; because the base
linear coordinates are world-aligned and pitch is a scalar angle, generalized
velocity is the plain time derivative of q and integration needs no manifold
retraction.

Algorithms:

* mass matrix: composite-rigid-body algorithm in planar Plücker coordinates
  (spatial vectors measured at the world origin), generalized to the floating
  base by treating the three base coordinates as the innermost "joints".
* bias forces: recursive Newton-Euler inverse dynamics with zero acceleration,
  which yields C(q,v)v + g(q) in one pass (gravity enters through the standard
  fictitious base-acceleration trick).
* forward dynamics: solve H a = S^T tau + sum J^T f - h.
* ground contact: regularized penalty model (spring-damper normal force,
  tanh-smoothed Coulomb friction).
* integration: semi-implicit Euler.

Everything here is a pure function of its inputs. The `*_batch` functions are
the same math vectorized over a leading episode axis; they back the episode
runner in `control` and are cross-checked against the single-state API in
tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .robotmodel import RobotModel, cross2

GRAVITY = 9.81

__all__ = [
    "GeneralizedState",
    "GeneralizedForce",
    "MassMatrix",
    "BiasForce",
    "PointJacobian",
    "GroundContactConfig",
    "GroundContact",
    "PointForce",
    "DimensionMismatchError",
    "SingularMassMatrixError",
    "SimulationDivergenceError",
    "mass_matrix",
    "bias_forces",
    "point_jacobian",
    "inverse_dynamics",
    "forward_dynamics",
    "ground_contact_forces",
    "step",
    "total_energy",
]


class DimensionMismatchError(ValueError):
    pass


class SingularMassMatrixError(RuntimeError):
    def __init__(self, cond: float):
        super().__init__(f"mass matrix is numerically singular (condition number {cond:.3e})")
        self.cond = cond


class SimulationDivergenceError(RuntimeError):
    pass


@dataclass
class GeneralizedState:
    """Base pose + joint configuration and the full generalized velocity."""

    t_phys: float
    q_base: np.ndarray   # (3,) = (x, z, pitch)
    q_joint: np.ndarray  # (n,)
    v: np.ndarray        # (3 + n,)

    def __post_init__(self):
        self.q_base = np.asarray(self.q_base, dtype=float)
        self.q_joint = np.asarray(self.q_joint, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.v.shape != (self.q_base.size + self.q_joint.size,):
            raise DimensionMismatchError(
                f"v has length {self.v.size}, expected {self.q_base.size + self.q_joint.size}")
        if not (np.all(np.isfinite(self.q_base)) and np.all(np.isfinite(self.q_joint))
                and np.all(np.isfinite(self.v))):
            raise SimulationDivergenceError("non-finite state")

    @property
    def q(self) -> np.ndarray:
        return np.concatenate([self.q_base, self.q_joint])

    def copy(self) -> "GeneralizedState":
        return GeneralizedState(self.t_phys, self.q_base.copy(), self.q_joint.copy(), self.v.copy())


@dataclass(frozen=True)
class GeneralizedForce:
    tau: np.ndarray  # (b + n,)


@dataclass(frozen=True)
class MassMatrix:
    H: np.ndarray  # (b+n, b+n)
    b: int

    @property
    def H_bb(self) -> np.ndarray:
        return self.H[: self.b, : self.b]

    @property
    def H_bj(self) -> np.ndarray:
        return self.H[: self.b, self.b:]

    @property
    def H_jj(self) -> np.ndarray:
        return self.H[self.b:, self.b:]


@dataclass(frozen=True)
class BiasForce:
    h: np.ndarray  # (b+n,)
    b: int

    @property
    def h_b(self) -> np.ndarray:
        return self.h[: self.b]

    @property
    def h_j(self) -> np.ndarray:
        return self.h[self.b:]


@dataclass(frozen=True)
class PointJacobian:
    """Maps generalized velocity to world-frame point velocity (vx, vz) plus
    the host body's angular rate: J is (w, b+n)."""

    J: np.ndarray
    b: int
    body_id: int

    @property
    def J_b(self) -> np.ndarray:
        return self.J[:, : self.b]

    @property
    def J_j(self) -> np.ndarray:
        return self.J[:, self.b:]


@dataclass(frozen=True)
class GroundContactConfig:
    stiffness: float = 5.0e4      # N/m
    damping: float = 2.0e3        # N*s/m
    friction: float = 0.8         # Coulomb coefficient
    v_reg: float = 0.1            # m/s; smaller values chatter at dt = 1e-3

    def __post_init__(self):
        if not self.stiffness > 0:
            raise ValueError("ground stiffness must be > 0")
        if self.damping < 0 or self.friction < 0:
            raise ValueError("ground damping and friction must be >= 0")
        if not self.v_reg > 0:
            raise ValueError("v_reg must be > 0")


@dataclass(frozen=True)
class GroundContact:
    body_id: int
    point_local: np.ndarray
    point_world: np.ndarray
    force: np.ndarray  # (2,) world frame


@dataclass(frozen=True)
class PointForce:
    """External force applied at a body-fixed point (no applied torque)."""

    body_id: int
    point_local: np.ndarray  # (2,) body frame
    force_world: np.ndarray  # (2,)


# ---------------------------------------------------------------------------
# kinematic tables (precomputed tree structure, shared by all algorithms)

@dataclass(frozen=True)
class KinematicTables:
    n_bodies: int
    n_joints: int
    parent_body: np.ndarray        # (nb,) parent body id, -1 for base
    parent_joint: np.ndarray       # (nb,) joint id connecting to parent, -1 for base
    joint_child: np.ndarray        # (n,) child body per joint
    joint_anchor_local: np.ndarray  # (n, 2) anchor in parent frame
    chain: np.ndarray              # (nb, n) 1.0 if joint on the base->body path
    masses: np.ndarray             # (nb,)
    inertias: np.ndarray           # (nb,)
    coms: np.ndarray               # (nb, 2) body-frame CoM
    damping: np.ndarray            # (n,) viscous joint damping
    contact_body: np.ndarray       # (nc,) ground contact point host body
    contact_local: np.ndarray      # (nc, 2)
    body_order: tuple[int, ...]    # parent-first traversal order

    @staticmethod
    def from_model(model: RobotModel) -> "KinematicTables":
        nb, n = len(model.bodies), model.n
        parent_body = np.full(nb, -1, dtype=int)
        parent_joint = np.full(nb, -1, dtype=int)
        joint_child = np.zeros(n, dtype=int)
        anchors = np.zeros((n, 2))
        chain = np.zeros((nb, n))
        for j in model.joints:
            parent_body[j.child_body] = j.parent_body
            parent_joint[j.child_body] = j.joint_id
            joint_child[j.joint_id] = j.child_body
            anchors[j.joint_id] = j.position_in_parent_m
        for body in model.bodies:
            for jid in model.joint_chain(body.body_id):
                chain[body.body_id, jid] = 1.0
        cbody, clocal = [], []
        for body in model.bodies:
            for pt in body.contact_points_m:
                cbody.append(body.body_id)
                clocal.append(pt)
        return KinematicTables(
            n_bodies=nb,
            n_joints=n,
            parent_body=parent_body,
            parent_joint=parent_joint,
            joint_child=joint_child,
            joint_anchor_local=anchors,
            chain=chain,
            masses=np.array([b.mass_kg for b in model.bodies]),
            inertias=np.array([b.inertia_kgm2 for b in model.bodies]),
            coms=np.array([b.com_m for b in model.bodies]),
            damping=np.array([j.viscous_damping_nms for j in model.joints]),
            contact_body=np.array(cbody, dtype=int) if cbody else np.zeros(0, dtype=int),
            contact_local=np.array(clocal) if clocal else np.zeros((0, 2)),
            body_order=tuple(range(nb)),  # models list bodies parent-first
        )


def _rot(ang: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Rotate (...,2) vectors by (...,) angles."""
    c, s = np.cos(ang), np.sin(ang)
    x, z = vec[..., 0], vec[..., 1]
    return np.stack([c * x - s * z, s * x + c * z], axis=-1)


def _perp(vec: np.ndarray) -> np.ndarray:
    """90 degree CCW rotation: (x, z) -> (-z, x). omega * perp(r) is the
    velocity of a point at offset r from a rotation center."""
    return np.stack([-vec[..., 1], vec[..., 0]], axis=-1)


# ---------------------------------------------------------------------------
# forward kinematics (batched; single states pass arrays with no leading axis)

def fk_batch(kin: KinematicTables, q_base: np.ndarray, q_joint: np.ndarray):
    """World angle (..., nb) and origin position (..., nb, 2) per body."""
    batch = q_base.shape[:-1]
    ang = np.zeros(batch + (kin.n_bodies,))
    pos = np.zeros(batch + (kin.n_bodies, 2))
    ang[..., 0] = q_base[..., 2]
    pos[..., 0, :] = q_base[..., :2]
    for body in kin.body_order[1:]:
        p = kin.parent_body[body]
        j = kin.parent_joint[body]
        pos[..., body, :] = pos[..., p, :] + _rot(ang[..., p], kin.joint_anchor_local[j])
        ang[..., body] = ang[..., p] + q_joint[..., j]
    return ang, pos


def vel_batch(kin: KinematicTables, ang, pos, v):
    """Body angular rate (..., nb) and origin linear velocity (..., nb, 2)."""
    batch = ang.shape[:-1]
    om = np.zeros(batch + (kin.n_bodies,))
    lv = np.zeros(batch + (kin.n_bodies, 2))
    om[..., 0] = v[..., 2]
    lv[..., 0, :] = v[..., :2]
    qd = v[..., 3:]
    for body in kin.body_order[1:]:
        p = kin.parent_body[body]
        j = kin.parent_joint[body]
        r = pos[..., body, :] - pos[..., p, :]
        lv[..., body, :] = lv[..., p, :] + om[..., p, None] * _perp(r)
        om[..., body] = om[..., p] + qd[..., j]
    return om, lv


def _com_world(kin: KinematicTables, ang, pos):
    """World CoM position per body, (..., nb, 2)."""
    c, s = np.cos(ang), np.sin(ang)  # (..., nb)
    cx, cz = kin.coms[:, 0], kin.coms[:, 1]
    wx = pos[..., 0] + c * cx - s * cz
    wz = pos[..., 1] + s * cx + c * cz
    return np.stack([wx, wz], axis=-1)


# ---------------------------------------------------------------------------
# inverse dynamics (recursive Newton-Euler), batched

def rnea_batch(kin: KinematicTables, ang, pos, v, a, gravity: float = GRAVITY,
               masses=None, inertias=None):
    """Generalized force required to realize acceleration `a` at state (q, v).

    Returns tau_gen (..., 3+n). External wrenches are handled by the callers
    through point Jacobians, not in here. `masses`/`inertias` override the
    model tables (used for domain-randomized episode batches; broadcast
    against the batch shape).
    """
    m = kin.masses if masses is None else np.asarray(masses)
    I = kin.inertias if inertias is None else np.asarray(inertias)
    batch = ang.shape[:-1]
    nb, n = kin.n_bodies, kin.n_joints
    om, _ = vel_batch(kin, ang, pos, v)
    al = np.zeros(batch + (nb,))
    acc = np.zeros(batch + (nb, 2))
    al[..., 0] = a[..., 2]
    acc[..., 0, :] = a[..., :2]
    acc[..., 0, 1] += gravity  # fictitious upward base acceleration stands in for gravity
    ad = a[..., 3:]
    for body in kin.body_order[1:]:
        p = kin.parent_body[body]
        j = kin.parent_joint[body]
        r = pos[..., body, :] - pos[..., p, :]
        acc[..., body, :] = acc[..., p, :] + al[..., p, None] * _perp(r) - om[..., p, None] ** 2 * r
        al[..., body] = al[..., p] + ad[..., j]

    com_w = _com_world(kin, ang, pos)
    rc = com_w - pos
    acc_com = acc + al[..., None] * _perp(rc) - om[..., None] ** 2 * rc
    F = m[..., :, None] * acc_com                           # (..., nb, 2)
    N = I * al                                              # (..., nb)

    f = F.copy()
    nmom = N + cross2(rc, F)                                # torque about body origin
    # leaf-to-root accumulation
    for body in kin.body_order[:0:-1]:
        p = kin.parent_body[body]
        f[..., p, :] += f[..., body, :]
        nmom[..., p] += nmom[..., body] + cross2(pos[..., body, :] - pos[..., p, :], f[..., body, :])

    tau = np.zeros(batch + (3 + n,))
    tau[..., 0:2] = f[..., 0, :]
    tau[..., 2] = nmom[..., 0]
    for j in range(n):
        tau[..., 3 + j] = nmom[..., kin.joint_child[j]]
    return tau


# ---------------------------------------------------------------------------
# mass matrix

def _spatial_inertia(mass, com_w, inertia):
    """Planar spatial inertia at the world origin for a body with world CoM
    `com_w`: momentum = I_sp @ (vx, vz, omega) measured at the origin."""
    cx, cz = com_w[..., 0], com_w[..., 1]
    I = np.zeros(com_w.shape[:-1] + (3, 3))
    I[..., 0, 0] = mass
    I[..., 1, 1] = mass
    I[..., 0, 2] = -mass * cz
    I[..., 2, 0] = -mass * cz
    I[..., 1, 2] = mass * cx
    I[..., 2, 1] = mass * cx
    I[..., 2, 2] = inertia + mass * (cx ** 2 + cz ** 2)
    return I


def crba(model: RobotModel, kin: KinematicTables, ang, pos) -> np.ndarray:
    """Composite-rigid-body algorithm, floating base, planar Plücker coords.

    Single-state only (no batch axis); the batched path uses mass_matrix_batch.
    """
    nb, n = kin.n_bodies, kin.n_joints
    nv = 3 + n
    com_w = _com_world(kin, ang, pos)
    Ic = [_spatial_inertia(kin.masses[k], com_w[k], kin.inertias[k]) for k in range(nb)]
    # composite inertia of each subtree (children before parents)
    for body in kin.body_order[:0:-1]:
        Ic[kin.parent_body[body]] = Ic[kin.parent_body[body]] + Ic[body]

    # motion subspace of each coordinate, expressed at the world origin
    S = np.zeros((nv, 3))
    S[0] = (1.0, 0.0, 0.0)
    S[1] = (0.0, 1.0, 0.0)
    S[2] = (pos[0, 1], -pos[0, 0], 1.0)  # rotation about the base origin
    for j in range(n):
        child = kin.joint_child[j]  # child origin sits at the joint anchor
        S[3 + j] = (pos[child, 1], -pos[child, 0], 1.0)

    H = np.zeros((nv, nv))
    # base-base block uses the whole-robot composite
    for i in range(3):
        for k in range(i, 3):
            H[i, k] = H[k, i] = S[i] @ Ic[0] @ S[k]
    # joint columns: supported by base coords and ancestor joints
    for j in range(n):
        child = kin.joint_child[j]
        IcS = Ic[child] @ S[3 + j]
        for i in range(3):
            H[i, 3 + j] = H[3 + j, i] = S[i] @ IcS
        for i in range(n):
            if kin.chain[child, i]:  # joint i on the path to `child` (includes j)
                H[3 + i, 3 + j] = H[3 + j, 3 + i] = S[3 + i] @ IcS
    return H


def com_jacobians_batch(kin: KinematicTables, ang, pos):
    """Linear (..., nb, 2, nv) and angular (..., nb, nv) CoM Jacobians."""
    batch = ang.shape[:-1]
    nb, n = kin.n_bodies, kin.n_joints
    nv = 3 + n
    com_w = _com_world(kin, ang, pos)
    Jlin = np.zeros(batch + (nb, 2, nv))
    Jang = np.zeros(batch + (nb, nv))
    Jlin[..., :, 0, 0] = 1.0
    Jlin[..., :, 1, 1] = 1.0
    base = pos[..., 0:1, :]
    Jlin[..., :, :, 2] = _perp(com_w - base)
    Jang[..., :, 2] = 1.0
    for j in range(n):
        anchor = pos[..., kin.joint_child[j], :]
        lever = _perp(com_w - anchor[..., None, :])
        mask = kin.chain[:, j]  # (nb,)
        Jlin[..., :, :, 3 + j] = lever * mask[:, None]
        Jang[..., :, 3 + j] = mask
    return Jlin, Jang


def mass_matrix_batch(kin: KinematicTables, ang, pos, masses=None, inertias=None):
    """H assembled from per-body CoM Jacobians (equals the CRBA result)."""
    m = kin.masses if masses is None else masses
    I = kin.inertias if inertias is None else inertias
    Jlin, Jang = com_jacobians_batch(kin, ang, pos)
    H = np.einsum("...brc,...brd->...cd", Jlin * np.asarray(m)[..., :, None, None], Jlin)
    H += np.einsum("...bc,...bd->...cd", Jang * np.asarray(I)[..., :, None], Jang)
    return H


# ---------------------------------------------------------------------------
# public single-state operations

def _check_state(model: RobotModel, state: GeneralizedState) -> None:
    if state.q_joint.size != model.n or state.v.size != model.nv:
        raise DimensionMismatchError(
            f"state dims (n={state.q_joint.size}, nv={state.v.size}) do not match "
            f"model (n={model.n}, nv={model.nv})")
    if model.base_dof != 3:
        raise DimensionMismatchError("this dynamics backend is planar (base_dof == 3)")


def mass_matrix(model: RobotModel, state: GeneralizedState) -> MassMatrix:
    """Joint-space inertia matrix H(q) via the floating-base CRBA."""
    _check_state(model, state)
    kin = KinematicTables.from_model(model)
    ang, pos = fk_batch(kin, state.q_base, state.q_joint)
    return MassMatrix(crba(model, kin, ang, pos), model.b)


def bias_forces(model: RobotModel, state: GeneralizedState) -> BiasForce:
    """C(q,v)v + g(q), computed as zero-acceleration inverse dynamics."""
    _check_state(model, state)
    kin = KinematicTables.from_model(model)
    ang, pos = fk_batch(kin, state.q_base, state.q_joint)
    h = rnea_batch(kin, ang, pos, state.v, np.zeros(model.nv))
    return BiasForce(h, model.b)


def inverse_dynamics(model: RobotModel, state: GeneralizedState, a: np.ndarray,
                     gravity: float = GRAVITY) -> np.ndarray:
    """Generalized force realizing acceleration `a` (no external wrenches)."""
    _check_state(model, state)
    kin = KinematicTables.from_model(model)
    ang, pos = fk_batch(kin, state.q_base, state.q_joint)
    return rnea_batch(kin, ang, pos, state.v, np.asarray(a, dtype=float), gravity=gravity)


def point_jacobian(model: RobotModel, state: GeneralizedState, body_id: int,
                   point_local) -> PointJacobian:
    """World-frame spatial velocity map of a body-fixed point."""
    _check_state(model, state)
    model.body(body_id)  # raises KeyError for unknown bodies
    kin = KinematicTables.from_model(model)
    ang, pos = fk_batch(kin, state.q_base, state.q_joint)
    p_w = pos[body_id] + _rot(ang[body_id], np.asarray(point_local, dtype=float))
    J = np.zeros((3, model.nv))
    J[0, 0] = 1.0
    J[1, 1] = 1.0
    J[:2, 2] = _perp(p_w - pos[0])
    J[2, 2] = 1.0
    for j in range(kin.n_joints):
        if kin.chain[body_id, j]:
            J[:2, 3 + j] = _perp(p_w - pos[kin.joint_child[j]])
            J[2, 3 + j] = 1.0
    return PointJacobian(J, model.b, body_id)


def forward_dynamics(model: RobotModel, state: GeneralizedState, tau_m: np.ndarray,
                     ext: list[tuple[PointJacobian, np.ndarray]] | None = None) -> np.ndarray:
    """Solve H a = S^T tau_m + sum J^T f - h for the generalized acceleration.

    `ext` pairs a point Jacobian with a world-frame wrench (f_x, f_z, tau_y).
    Joint viscous damping from the model (nonzero only after domain
    randomization) is applied on the torque side.
    """
    _check_state(model, state)
    tau_m = np.asarray(tau_m, dtype=float)
    if tau_m.shape != (model.n,):
        raise DimensionMismatchError(f"tau_m has shape {tau_m.shape}, expected ({model.n},)")
    H = mass_matrix(model, state).H
    h = bias_forces(model, state).h
    rhs = -h
    kin = KinematicTables.from_model(model)
    rhs[3:] += tau_m - kin.damping * state.v[3:]
    if ext:
        for jac, wrench in ext:
            rhs = rhs + jac.J.T @ np.asarray(wrench, dtype=float)
    try:
        a = np.linalg.solve(H, rhs)
    except np.linalg.LinAlgError:
        raise SingularMassMatrixError(float(np.linalg.cond(H))) from None
    if not np.all(np.isfinite(a)):
        raise SingularMassMatrixError(float(np.linalg.cond(H)))
    return a


def ground_contact_forces(model: RobotModel, state: GeneralizedState,
                          cfg: GroundContactConfig) -> list[GroundContact]:
    """Penalty forces at penetrating foot points; empty list when airborne."""
    _check_state(model, state)
    kin = KinematicTables.from_model(model)
    ang, pos = fk_batch(kin, state.q_base, state.q_joint)
    om, lv = vel_batch(kin, ang, pos, state.v)
    out = []
    for k in range(len(kin.contact_body)):
        body = int(kin.contact_body[k])
        local = kin.contact_local[k]
        p_w = pos[body] + _rot(ang[body], local)
        if p_w[1] >= 0.0:
            continue
        v_pt = lv[body] + om[body] * _perp(p_w - pos[body])
        normal = cfg.stiffness * (-p_w[1]) + cfg.damping * max(0.0, -v_pt[1])
        normal = max(normal, 0.0)
        tangential = -cfg.friction * normal * np.tanh(v_pt[0] / cfg.v_reg)
        out.append(GroundContact(body, local.copy(), p_w, np.array([tangential, normal])))
    return out


def step(model: RobotModel, state: GeneralizedState, tau_m: np.ndarray,
         external_contacts: list[PointForce] | None, cfg: GroundContactConfig,
         dt: float) -> GeneralizedState:
    """Semi-implicit Euler step: v += a dt, then q += v dt."""
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"dt must be in (0, 0.01], got {dt}")
    ext: list[tuple[PointJacobian, np.ndarray]] = []
    for gc in ground_contact_forces(model, state, cfg):
        jac = point_jacobian(model, state, gc.body_id, gc.point_local)
        ext.append((jac, np.array([gc.force[0], gc.force[1], 0.0])))
    for pf in external_contacts or []:
        jac = point_jacobian(model, state, pf.body_id, pf.point_local)
        ext.append((jac, np.array([pf.force_world[0], pf.force_world[1], 0.0])))
    a = forward_dynamics(model, state, tau_m, ext)
    v_new = state.v + a * dt
    q_base = state.q_base + v_new[:3] * dt
    q_joint = state.q_joint + v_new[3:] * dt
    if not (np.all(np.isfinite(v_new)) and np.all(np.isfinite(q_base))
            and np.all(np.isfinite(q_joint))):
        raise SimulationDivergenceError(f"simulation diverged at t={state.t_phys:.4f}s")
    return GeneralizedState(state.t_phys + dt, q_base, q_joint, v_new)


def total_energy(model: RobotModel, state: GeneralizedState, gravity: float = GRAVITY) -> float:
    """Kinetic + gravitational potential energy (potential zero at z = 0)."""
    kin = KinematicTables.from_model(model)
    ang, pos = fk_batch(kin, state.q_base, state.q_joint)
    om, lv = vel_batch(kin, ang, pos, state.v)
    com_w = _com_world(kin, ang, pos)
    v_com = lv + om[..., None] * _perp(com_w - pos)
    T = 0.5 * np.sum(kin.masses * np.sum(v_com ** 2, axis=-1)) \
        + 0.5 * np.sum(kin.inertias * om ** 2)
    V = gravity * np.sum(kin.masses * com_w[..., 1])
    return float(T + V)


# ---------------------------------------------------------------------------
# batched helpers used by the episode runner

def point_world_batch(kin: KinematicTables, ang, pos, body_ids, point_local):
    """World positions of per-episode body points. body_ids (...,), point_local (..., 2)."""
    a = np.take_along_axis(ang, body_ids[..., None], -1)[..., 0]
    p = np.take_along_axis(pos, body_ids[..., None, None].repeat(2, -1), -2)[..., 0, :]
    return p + _rot(a, point_local)


def gen_force_point_batch(kin: KinematicTables, pos, body_ids, point_w, force):
    """Generalized force of world point forces, (..., 3+n). Vectorized over
    episodes with per-episode host bodies."""
    batch = point_w.shape[:-1]
    nv = 3 + kin.n_joints
    tau = np.zeros(batch + (nv,))
    tau[..., 0] = force[..., 0]
    tau[..., 1] = force[..., 1]
    tau[..., 2] = cross2(point_w - pos[..., 0, :], force)
    chain = kin.chain[body_ids]  # (..., n)
    for j in range(kin.n_joints):
        anchor = pos[..., kin.joint_child[j], :]
        tau[..., 3 + j] = chain[..., j] * cross2(point_w - anchor, force)
    return tau


def ground_forces_batch(kin: KinematicTables, ang, pos, om, lv, cfg: GroundContactConfig,
                        mu_scale=1.0):
    """Generalized ground-reaction force (..., 3+n) plus per-point world forces."""
    batch = ang.shape[:-1]
    nv = 3 + kin.n_joints
    tau = np.zeros(batch + (nv,))
    nc = len(kin.contact_body)
    forces = np.zeros(batch + (nc, 2))
    for k in range(nc):
        body = int(kin.contact_body[k])
        p_w = pos[..., body, :] + _rot(ang[..., body], kin.contact_local[k])
        v_pt = lv[..., body, :] + om[..., body, None] * _perp(p_w - pos[..., body, :])
        pen = np.maximum(0.0, -p_w[..., 1])
        normal = cfg.stiffness * pen + cfg.damping * np.maximum(0.0, -v_pt[..., 1]) * (pen > 0)
        normal = np.maximum(normal, 0.0)
        tangential = -cfg.friction * mu_scale * normal * np.tanh(v_pt[..., 0] / cfg.v_reg)
        f = np.stack([tangential, normal], axis=-1)
        forces[..., k, :] = f
        body_ids = np.full(batch, body, dtype=int)
        tau += gen_force_point_batch(kin, pos, body_ids, p_w, f)
    return tau, forces

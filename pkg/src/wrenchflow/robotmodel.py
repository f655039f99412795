"""Robot description for a planar floating-base articulated robot.

Conventions used throughout the package:

* World frame: x to the right, z up, rotations about the out-of-plane y axis,
  positive counter-clockwise. Ground is the plane z = 0.
* The base body is the root of the joint tree. Base pose is (x, z, pitch);
  base velocity is the world-frame linear velocity of the base origin plus
  the pitch rate, so generalized velocity is simply d/dt of the coordinates.
* A planar wrench is (f_x, f_z, tau_y): two force components and the
  out-of-plane torque.
* Surface regions discretize the robot surface for contact estimation, one
  wrench slot per region. Region indices are 1-based and contiguous (1..N);
  array columns are positional (column j holds region j+1).

All lengths are meters, masses kg, angles radians, inertias kg*m^2.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "BodySpec",
    "JointSpec",
    "SurfaceRegion",
    "FallThresholds",
    "RobotModel",
    "RegionWrench",
    "ModelValidationError",
    "planar_humanoid_fixture",
    "load_model",
    "save_model",
    "model_to_dict",
    "model_from_dict",
    "com_equivalent_wrench",
    "region_jacobian",
    "lift_jacobian",
]


class ModelValidationError(ValueError):
    """A robot model file or in-memory model violates an invariant."""


def _vec(x, length, where):
    a = np.asarray(x, dtype=float)
    if a.shape != (length,):
        raise ModelValidationError(f"{where}: expected {length} numbers, got shape {a.shape}")
    return a


def _points(x, where):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ModelValidationError(f"{where}: expected a list of [x, z] points")
    return a


@dataclass(frozen=True)
class BodySpec:
    """One rigid body. `parent_joint` is None only for the base."""

    body_id: int
    name: str
    parent_joint: int | None
    mass_kg: float
    com_m: np.ndarray           # CoM offset in the body frame, shape (2,)
    inertia_kgm2: float         # rotational inertia about the CoM (planar scalar)
    surface_points_m: np.ndarray  # (P, 2) sample points on the body surface
    contact_points_m: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    # ground-contact anchors (heel/toe on feet); empty for most bodies


@dataclass(frozen=True)
class JointSpec:
    """Revolute joint about the out-of-plane axis, anchored in the parent frame.

    The child body frame has its origin at the joint anchor; joint angle q
    rotates the child frame relative to the parent.
    """

    joint_id: int
    name: str
    parent_body: int
    child_body: int
    position_in_parent_m: np.ndarray  # (2,)
    limits_rad: tuple[float, float]
    torque_limit_nm: float
    joint_type: str = "revolute"
    axis: str = "y"
    viscous_damping_nms: float = 0.0  # nonzero only via domain randomization


@dataclass(frozen=True)
class SurfaceRegion:
    """Contact candidate region: a body, its reference CoM point, and surface samples."""

    index: int               # 1-based, contiguous over the model
    body_id: int
    com_m: np.ndarray        # region CoM in the body frame (here: the body CoM)
    points_m: np.ndarray     # (P, 2) representative surface points, body frame


@dataclass(frozen=True)
class FallThresholds:
    min_base_height_m: float
    max_pitch_rad: float


@dataclass(frozen=True)
class RegionWrench:
    """Planar wrench applied at a region's CoM: (f_x, f_z, tau_y)."""

    region_index: int
    wrench: np.ndarray  # (w,)


@dataclass(frozen=True)
class RobotModel:
    bodies: tuple[BodySpec, ...]
    joints: tuple[JointSpec, ...]
    regions: tuple[SurfaceRegion, ...]
    base_dof: int
    q_default_rad: np.ndarray
    fall_thresholds: FallThresholds

    @property
    def b(self) -> int:
        return self.base_dof

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def w(self) -> int:
        """Wrench dimension: equals the base DoF (3 planar, 6 spatial)."""
        return self.base_dof

    @property
    def nv(self) -> int:
        """Generalized-velocity dimension b + n."""
        return self.base_dof + len(self.joints)

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def total_mass(self) -> float:
        return float(sum(b.mass_kg for b in self.bodies))

    def body(self, body_id: int) -> BodySpec:
        if not 0 <= body_id < len(self.bodies):
            raise KeyError(f"unknown body id {body_id}")
        return self.bodies[body_id]

    def region(self, index: int) -> SurfaceRegion:
        if not 1 <= index <= len(self.regions):
            raise KeyError(f"unknown region index {index} (valid: 1..{len(self.regions)})")
        return self.regions[index - 1]

    def children(self, body_id: int) -> list[int]:
        return [j.child_body for j in self.joints if j.parent_body == body_id]

    def joint_chain(self, body_id: int) -> list[int]:
        """Joint ids on the path from the base to `body_id`, root first."""
        chain: list[int] = []
        b = self.body(body_id)
        while b.parent_joint is not None:
            j = self.joints[b.parent_joint]
            chain.append(j.joint_id)
            b = self.body(j.parent_body)
        return chain[::-1]

    def body_hop_distance(self) -> np.ndarray:
        """(n_bodies, n_bodies) tree hop distances between bodies."""
        nb = len(self.bodies)
        adj = [[] for _ in range(nb)]
        for j in self.joints:
            adj[j.parent_body].append(j.child_body)
            adj[j.child_body].append(j.parent_body)
        dist = np.full((nb, nb), -1, dtype=int)
        for s in range(nb):
            dist[s, s] = 0
            queue = [s]
            while queue:
                u = queue.pop(0)
                for v in adj[u]:
                    if dist[s, v] < 0:
                        dist[s, v] = dist[s, u] + 1
                        queue.append(v)
        return dist

    def region_hop_distance(self) -> np.ndarray:
        """(N, N) tree hop distances between the host bodies of each region pair."""
        bd = self.body_hop_distance()
        hosts = [r.body_id for r in self.regions]
        return bd[np.ix_(hosts, hosts)]

    def validate(self) -> None:
        if self.base_dof not in (3, 6):
            raise ModelValidationError(f"base_dof must be 3 or 6, got {self.base_dof}")
        for b in self.bodies:
            if not b.mass_kg > 0:
                raise ModelValidationError(f"body '{b.name}': mass must be > 0, got {b.mass_kg}")
            if not b.inertia_kgm2 > 0:
                raise ModelValidationError(f"body '{b.name}': inertia must be > 0, got {b.inertia_kgm2}")
        ids = [b.body_id for b in self.bodies]
        if ids != list(range(len(self.bodies))):
            raise ModelValidationError("body ids must be 0..n_bodies-1 in order")
        if self.bodies[0].parent_joint is not None:
            raise ModelValidationError("body 0 must be the base (no parent joint)")
        # joint graph must be a tree rooted at the base
        seen = {0}
        for j in self.joints:
            if j.joint_type != "revolute":
                raise ModelValidationError(f"joint '{j.name}': only revolute joints are supported")
            if j.parent_body not in seen:
                raise ModelValidationError("joint graph not a tree (bodies must be listed parent-first)")
            if j.child_body in seen:
                raise ModelValidationError("joint graph not a tree (body has two parents or a cycle)")
            if self.bodies[j.child_body].parent_joint != j.joint_id:
                raise ModelValidationError(
                    f"joint '{j.name}': child body {j.child_body} does not point back to it")
            seen.add(j.child_body)
        if len(seen) != len(self.bodies):
            raise ModelValidationError("joint graph not a tree (unreachable bodies)")
        if self.q_default_rad.shape != (self.n,):
            raise ModelValidationError(
                f"q_default_rad must have length {self.n}, got {self.q_default_rad.shape}")
        indices = [r.index for r in self.regions]
        if indices != list(range(1, len(self.regions) + 1)):
            raise ModelValidationError("region indices must be contiguous 1..N")
        for r in self.regions:
            body = self.body(r.body_id)
            pts = np.vstack([body.surface_points_m, body.com_m[None, :]])
            lo, hi = pts.min(axis=0) - 0.05, pts.max(axis=0) + 0.05
            if np.any(r.com_m < lo) or np.any(r.com_m > hi):
                raise ModelValidationError(
                    f"region {r.index}: CoM lies outside the bounding geometry of body '{body.name}'")

    def canonical_json(self) -> str:
        return json.dumps(model_to_dict(self), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# canonical fixture

def planar_humanoid_fixture() -> RobotModel:
    """Seven-body planar humanoid: floating torso, two single-link arms, two
    two-link legs with flat feet. Total mass 30 kg, N = 7 surface regions
    (one per body). Default posture is a slight-crouch double-support stance:
    shanks vertical (flat feet), split stance, asymmetric arms so that left
    and right limbs are distinguishable from proprioception.
    """
    bodies = (
        BodySpec(0, "torso", None, 12.0, np.array([0.0, 0.25]), 0.29,
                 np.array([[0.10, 0.08], [0.10, 0.28], [0.10, 0.46],
                           [-0.10, 0.08], [-0.10, 0.28], [-0.10, 0.46], [0.0, 0.52]])),
        BodySpec(1, "arm_left", 0, 2.0, np.array([0.0, -0.28]), 0.050,
                 np.array([[0.03, -0.18], [-0.03, -0.18], [0.03, -0.40],
                           [-0.03, -0.40], [0.0, -0.55]])),
        BodySpec(2, "arm_right", 1, 2.0, np.array([0.0, -0.28]), 0.050,
                 np.array([[0.03, -0.18], [-0.03, -0.18], [0.03, -0.40],
                           [-0.03, -0.40], [0.0, -0.55]])),
        BodySpec(3, "thigh_left", 2, 4.0, np.array([0.0, -0.20]), 0.053,
                 np.array([[0.05, -0.10], [-0.05, -0.10], [0.05, -0.30], [-0.05, -0.30]])),
        BodySpec(4, "thigh_right", 3, 4.0, np.array([0.0, -0.20]), 0.053,
                 np.array([[0.05, -0.10], [-0.05, -0.10], [0.05, -0.30], [-0.05, -0.30]])),
        BodySpec(5, "shank_left", 4, 3.0, np.array([0.01, -0.26]), 0.060,
                 np.array([[0.04, -0.12], [-0.04, -0.12], [0.04, -0.32],
                           [-0.04, -0.32], [0.14, -0.43]]),
                 contact_points_m=np.array([[-0.06, -0.45], [0.14, -0.45]])),
        BodySpec(6, "shank_right", 5, 3.0, np.array([0.01, -0.26]), 0.060,
                 np.array([[0.04, -0.12], [-0.04, -0.12], [0.04, -0.32],
                           [-0.04, -0.32], [0.14, -0.43]]),
                 contact_points_m=np.array([[-0.06, -0.45], [0.14, -0.45]])),
    )
    joints = (
        JointSpec(0, "shoulder_left", 0, 1, np.array([0.0, 0.45]), (-2.5, 2.5), 40.0),
        JointSpec(1, "shoulder_right", 0, 2, np.array([0.0, 0.45]), (-2.5, 2.5), 40.0),
        JointSpec(2, "hip_left", 0, 3, np.array([0.0, 0.0]), (-1.8, 1.8), 80.0),
        JointSpec(3, "hip_right", 0, 4, np.array([0.0, 0.0]), (-1.8, 1.8), 80.0),
        JointSpec(4, "knee_left", 3, 5, np.array([0.0, -0.40]), (-2.2, 2.2), 80.0),
        JointSpec(5, "knee_right", 4, 6, np.array([0.0, -0.40]), (-2.2, 2.2), 80.0),
    )
    regions = tuple(
        SurfaceRegion(i + 1, i, bodies[i].com_m.copy(), bodies[i].surface_points_m.copy())
        for i in range(7)
    )
    model = RobotModel(
        bodies=bodies,
        joints=joints,
        regions=regions,
        base_dof=3,
        q_default_rad=np.array([0.25, -0.35, 0.26, -0.26, -0.26, 0.26]),
        fall_thresholds=FallThresholds(min_base_height_m=0.55, max_pitch_rad=0.60),
    )
    model.validate()
    return model


# ---------------------------------------------------------------------------
# serialization (JSON, explicit units in field names, unknown keys rejected)

_TOP_KEYS = {"bodies", "joints", "regions", "base_dof", "q_default_rad", "fall_thresholds"}
_BODY_KEYS = {"body_id", "name", "parent_joint", "mass_kg", "com_m", "inertia_kgm2",
              "surface_points_m", "contact_points_m"}
_JOINT_KEYS = {"joint_id", "name", "parent_body", "child_body", "joint_type", "axis",
               "position_in_parent_m", "limits_rad", "torque_limit_nm", "viscous_damping_nms"}
_REGION_KEYS = {"index", "body_id", "com_m", "points_m"}
_FALL_KEYS = {"min_base_height_m", "max_pitch_rad"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise ModelValidationError(f"{where}: unknown keys {sorted(extra)}")


def model_to_dict(model: RobotModel) -> dict:
    return {
        "base_dof": model.base_dof,
        "q_default_rad": model.q_default_rad.tolist(),
        "fall_thresholds": {
            "min_base_height_m": model.fall_thresholds.min_base_height_m,
            "max_pitch_rad": model.fall_thresholds.max_pitch_rad,
        },
        "bodies": [
            {
                "body_id": b.body_id,
                "name": b.name,
                "parent_joint": b.parent_joint,
                "mass_kg": b.mass_kg,
                "com_m": b.com_m.tolist(),
                "inertia_kgm2": b.inertia_kgm2,
                "surface_points_m": b.surface_points_m.tolist(),
                "contact_points_m": b.contact_points_m.tolist(),
            }
            for b in model.bodies
        ],
        "joints": [
            {
                "joint_id": j.joint_id,
                "name": j.name,
                "parent_body": j.parent_body,
                "child_body": j.child_body,
                "joint_type": j.joint_type,
                "axis": j.axis,
                "position_in_parent_m": j.position_in_parent_m.tolist(),
                "limits_rad": list(j.limits_rad),
                "torque_limit_nm": j.torque_limit_nm,
                "viscous_damping_nms": j.viscous_damping_nms,
            }
            for j in model.joints
        ],
        "regions": [
            {
                "index": r.index,
                "body_id": r.body_id,
                "com_m": r.com_m.tolist(),
                "points_m": r.points_m.tolist(),
            }
            for r in model.regions
        ],
    }


def model_from_dict(d: dict) -> RobotModel:
    if not isinstance(d, dict):
        raise ModelValidationError("model file: top level must be an object")
    _reject_unknown(d, _TOP_KEYS, "model file")
    for key in _TOP_KEYS:
        if key not in d:
            raise ModelValidationError(f"model file: missing key '{key}'")
    bodies = []
    for i, bd in enumerate(d["bodies"]):
        where = f"bodies[{i}]"
        _reject_unknown(bd, _BODY_KEYS, where)
        bodies.append(BodySpec(
            body_id=int(bd["body_id"]),
            name=str(bd["name"]),
            parent_joint=None if bd["parent_joint"] is None else int(bd["parent_joint"]),
            mass_kg=float(bd["mass_kg"]),
            com_m=_vec(bd["com_m"], 2, f"{where}.com_m"),
            inertia_kgm2=float(bd["inertia_kgm2"]),
            surface_points_m=_points(bd["surface_points_m"], f"{where}.surface_points_m"),
            contact_points_m=_points(bd.get("contact_points_m", []), f"{where}.contact_points_m")
            if len(bd.get("contact_points_m", [])) else np.zeros((0, 2)),
        ))
    joints = []
    for i, jd in enumerate(d["joints"]):
        where = f"joints[{i}]"
        _reject_unknown(jd, _JOINT_KEYS, where)
        lim = jd["limits_rad"]
        joints.append(JointSpec(
            joint_id=int(jd["joint_id"]),
            name=str(jd["name"]),
            parent_body=int(jd["parent_body"]),
            child_body=int(jd["child_body"]),
            position_in_parent_m=_vec(jd["position_in_parent_m"], 2, f"{where}.position_in_parent_m"),
            limits_rad=(float(lim[0]), float(lim[1])),
            torque_limit_nm=float(jd["torque_limit_nm"]),
            joint_type=str(jd.get("joint_type", "revolute")),
            axis=str(jd.get("axis", "y")),
            viscous_damping_nms=float(jd.get("viscous_damping_nms", 0.0)),
        ))
    regions = []
    for i, rd in enumerate(d["regions"]):
        where = f"regions[{i}]"
        _reject_unknown(rd, _REGION_KEYS, where)
        regions.append(SurfaceRegion(
            index=int(rd["index"]),
            body_id=int(rd["body_id"]),
            com_m=_vec(rd["com_m"], 2, f"{where}.com_m"),
            points_m=_points(rd["points_m"], f"{where}.points_m"),
        ))
    ft = d["fall_thresholds"]
    _reject_unknown(ft, _FALL_KEYS, "fall_thresholds")
    model = RobotModel(
        bodies=tuple(bodies),
        joints=tuple(joints),
        regions=tuple(regions),
        base_dof=int(d["base_dof"]),
        q_default_rad=np.asarray(d["q_default_rad"], dtype=float),
        fall_thresholds=FallThresholds(float(ft["min_base_height_m"]), float(ft["max_pitch_rad"])),
    )
    model.validate()
    return model


def save_model(model: RobotModel, path) -> None:
    with open(path, "w") as f:
        json.dump(model_to_dict(model), f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path) -> RobotModel:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelValidationError(f"model file {path}: not valid JSON ({e})") from e
    return model_from_dict(d)


# ---------------------------------------------------------------------------
# region wrench algebra

def cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Planar cross product a x b -> out-of-plane scalar (a_x b_z - a_z b_x)."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def com_equivalent_wrench(force: np.ndarray, point: np.ndarray, region: SurfaceRegion) -> RegionWrench:
    """Move a point force to the region CoM: wrench = [f; (p - c) x f].

    `force` and `point` must be expressed in the same frame as the region CoM
    (the host body frame); the returned wrench lives in that frame too. The
    math is frame-covariant, so callers that work in world or base coordinates
    can pass all three quantities in that frame instead.
    """
    f = np.asarray(force, dtype=float)
    p = np.asarray(point, dtype=float)
    lever = p - region.com_m
    return RegionWrench(region.index, np.array([f[0], f[1], cross2(lever, f)]))


def shift_wrench(force: np.ndarray, point: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Frame-free version of the CoM shift: wrench of `force` at `point`
    expressed at `target` (all in one common frame)."""
    f = np.asarray(force, dtype=float)
    lever = np.asarray(point, dtype=float) - np.asarray(target, dtype=float)
    return np.concatenate([f, np.atleast_1d(cross2(lever, f))])


def region_jacobian(model: RobotModel, state, region: SurfaceRegion | int):
    """Point Jacobian of the region's CoM (angular rows of the host body)."""
    from . import dynamics  # local import; dynamics depends on this module

    r = model.region(region) if isinstance(region, int) else region
    return dynamics.point_jacobian(model, state, r.body_id, r.com_m)


def lift_jacobian(model: RobotModel, state) -> np.ndarray:
    """Stacked (w*N, b+n) Jacobian over all regions, row blocks by region index."""
    blocks = [region_jacobian(model, state, r).J for r in model.regions]
    return np.vstack(blocks)


def perturbed_model(model: RobotModel, **body_scale_kwargs) -> RobotModel:
    """Helper for tests: return a copy with scaled body masses."""
    scale = body_scale_kwargs.get("mass_scale", 1.0)
    bodies = tuple(replace(b, mass_kg=b.mass_kg * scale) for b in model.bodies)
    return replace(model, bodies=bodies)

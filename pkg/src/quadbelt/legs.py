"""3-DOF leg kinematics: hip-roll, hip-pitch, knee.

Chain per leg, working in the body frame: hip offset on the trunk, roll
about body x, a short abduction link sideways (+y on left legs, -y on
right), then thigh and shank rotating about body y.  Knee angle 0 is the
straight leg (singular); positive knee folds the shank.

Joint vector layout is 12 values, (roll, pitch, knee) per leg in LF, RF,
LR, RR order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from quadbelt.dynamics import NUM_FEET, PhysicalParams, rot_x

HIP_ROLL_LIMIT = 0.8
HIP_PITCH_LIMIT = 2.0
KNEE_MIN = 0.1
KNEE_MAX = 2.7
KNEE_NEAR_SINGULAR = 0.1
TORQUE_LIMIT = 35.0  # N m, clamp not simulated dynamics

LEFT_SIDE_SIGN = (1.0, -1.0, 1.0, -1.0)  # abduction direction per leg


class UnreachableTarget(ValueError):
    """Raised when an IK target lies outside the leg workspace."""


@dataclass(frozen=True)
class JointState:
    angles: np.ndarray  # (12,) rad

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        if self.angles.shape != (12,):
            raise ValueError("JointState needs 12 angles")

    def leg(self, i: int) -> np.ndarray:
        return self.angles[3 * i : 3 * i + 3]


@dataclass(frozen=True)
class JointTorques:
    torques: np.ndarray  # (12,) N m

    def __post_init__(self):
        object.__setattr__(self, "torques", np.asarray(self.torques, dtype=float))
        if self.torques.shape != (12,):
            raise ValueError("JointTorques needs 12 values")

    def squared_norm(self) -> float:
        return float(self.torques @ self.torques)


def _planar_chain(beta: float, gamma: float, l1: float, l2: float) -> tuple[float, float]:
    """Sagittal-plane foot coordinates (x, z) below the abduction point."""
    x = -l1 * math.sin(beta) - l2 * math.sin(beta + gamma)
    z = -l1 * math.cos(beta) - l2 * math.cos(beta + gamma)
    return x, z


def forward_kinematics(leg_index: int, leg_angles: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Body-frame foot position for one leg."""
    alpha, beta, gamma = float(leg_angles[0]), float(leg_angles[1]), float(leg_angles[2])
    d = LEFT_SIDE_SIGN[leg_index] * params.hip_lateral
    x, z = _planar_chain(beta, gamma, params.thigh_length, params.shank_length)
    w = np.array([x, d, z])
    return params.hip_offsets[leg_index] + rot_x(alpha) @ w


def inverse_kinematics(leg_index: int, target: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """Solve leg angles for a body-frame foot target (knee-fold branch).

    The knee branch is fixed (positive fold) and the roll ambiguity is
    resolved toward foot-below-hip, which is the locomotion regime; a foot
    folded above the hip plane maps to the mirrored roll solution.  Raises
    UnreachableTarget outside the workspace annulus.  Targets at full
    extension come back with knee at the 0 boundary; callers can test that
    with near_singular().
    """
    v = np.asarray(target, dtype=float) - params.hip_offsets[leg_index]
    d = LEFT_SIDE_SIGN[leg_index] * params.hip_lateral
    l1, l2 = params.thigh_length, params.shank_length

    rho = math.hypot(v[1], v[2])
    if rho < abs(d):
        raise UnreachableTarget(f"target inside abduction cylinder (rho={rho:.4f})")
    delta = math.atan2(v[2], v[1])
    alpha = delta + math.acos(max(-1.0, min(1.0, d / rho)))
    # rotate back through the roll; lateral offset is pure y so the plane
    # coordinates are just (v_x, z')
    zp = -math.sin(alpha) * v[1] + math.cos(alpha) * v[2]
    xp = v[0]

    r2 = xp * xp + zp * zp
    r = math.sqrt(r2)
    r_max = l1 + l2
    r_min = math.sqrt(max(l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * math.cos(math.pi), 0.0))
    if r > r_max + 1e-12:
        raise UnreachableTarget(f"target beyond reach (r={r:.4f} > {r_max:.4f})")
    if r < r_min - 1e-12 or r < 1e-9:
        raise UnreachableTarget(f"target too close to hip (r={r:.4f})")

    cg = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    gamma = math.acos(max(-1.0, min(1.0, cg)))
    beta = math.atan2(-xp, -zp) - math.atan2(l2 * math.sin(gamma), l1 + l2 * math.cos(gamma))
    return np.array([_wrap(alpha), _wrap(beta), gamma])


def _wrap(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def near_singular(leg_angles: np.ndarray) -> bool:
    """Knee at or past the straight-leg boundary."""
    return float(leg_angles[2]) <= KNEE_NEAR_SINGULAR


def within_limits(leg_angles: np.ndarray) -> bool:
    a, b, g = leg_angles
    return (
        abs(a) <= HIP_ROLL_LIMIT
        and abs(b) <= HIP_PITCH_LIMIT
        and KNEE_MIN <= g <= KNEE_MAX
    )


def jacobian(leg_index: int, leg_angles: np.ndarray, params: PhysicalParams) -> np.ndarray:
    """3x3 foot-position Jacobian, columns per joint (roll, pitch, knee)."""
    alpha, beta, gamma = float(leg_angles[0]), float(leg_angles[1]), float(leg_angles[2])
    d = LEFT_SIDE_SIGN[leg_index] * params.hip_lateral
    l1, l2 = params.thigh_length, params.shank_length
    sb, cb = math.sin(beta), math.cos(beta)
    sbg, cbg = math.sin(beta + gamma), math.cos(beta + gamma)

    w = np.array([-l1 * sb - l2 * sbg, d, -l1 * cb - l2 * cbg])
    R = rot_x(alpha)
    rw = R @ w
    col_roll = np.array([0.0, -rw[2], rw[1]])  # x_hat cross (R w)
    col_pitch = R @ np.array([-l1 * cb - l2 * cbg, 0.0, l1 * sb + l2 * sbg])
    col_knee = R @ np.array([-l2 * cbg, 0.0, l2 * sbg])
    return np.column_stack([col_roll, col_pitch, col_knee])


def feet_forward_kinematics(joints: JointState, params: PhysicalParams) -> np.ndarray:
    """All four body-frame foot positions, (4, 3)."""
    return np.stack(
        [forward_kinematics(i, joints.leg(i), params) for i in range(NUM_FEET)]
    )


def feet_inverse_kinematics(targets: np.ndarray, params: PhysicalParams) -> JointState:
    angles = np.empty(12)
    for i in range(NUM_FEET):
        angles[3 * i : 3 * i + 3] = inverse_kinematics(i, targets[i], params)
    return JointState(angles)


def torques_from_forces(joints: JointState, forces: np.ndarray, params: PhysicalParams) -> JointTorques:
    """Map per-foot 3-vector forces through tau = J^T f, leg by leg.

    ``forces`` is (4, 3); the caller fixes the sign convention (reaction
    vs applied) before getting here.
    """
    forces = np.asarray(forces, dtype=float)
    tau = np.empty(12)
    for i in range(NUM_FEET):
        J = jacobian(i, joints.leg(i), params)
        tau[3 * i : 3 * i + 3] = J.T @ forces[i]
    np.clip(tau, -TORQUE_LIMIT, TORQUE_LIMIT, out=tau)
    return JointTorques(tau)


def clamp_to_workspace(
    leg_index: int, target: np.ndarray, params: PhysicalParams
) -> tuple[np.ndarray, bool]:
    """Project an unreachable target back inside the workspace.

    Walks from the default stance point (deep inside the workspace) toward
    the target and bisects for the last reachable point on that segment.
    Returns (possibly moved target, clamped flag).
    """
    target = np.asarray(target, dtype=float)
    try:
        inverse_kinematics(leg_index, target, params)
        return target, False
    except UnreachableTarget:
        pass
    anchor = params.default_foot_positions[leg_index]
    lo, hi = 0.0, 1.0  # cand(t) = anchor + t (target - anchor); t=0 reachable
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        cand = anchor + mid * (target - anchor)
        try:
            inverse_kinematics(leg_index, cand, params)
            lo = mid
        except UnreachableTarget:
            hi = mid
    return anchor + lo * (target - anchor), True

"""Centroidal rigid-body model of the quadruped.

The body is a single rigid mass actuated by ground-reaction forces at the
four feet (order LF, RF, LR, RR everywhere).  Two flavours of the dynamics
live here: the full nonlinear form used by the simulator, and the
yaw-linearized form that the force QP is built on.  Both drop the Coriolis
term, and both share the sign convention

    q_dd = M f - g_aug,      g_aug = (g, 0, 0, 0),  g = (0, 0, 9.81)

i.e. ``gravity`` is the magnitude vector that gets *subtracted*, so free
fall comes out as -9.81 on the z row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FOOT_NAMES = ("LF", "RF", "LR", "RR")
NUM_FEET = 4


@dataclass(frozen=True)
class BodyPose:
    """World position plus Z-Y-X Euler orientation (roll, pitch, yaw)."""

    position: np.ndarray          # (3,) m
    orientation: np.ndarray       # (3,) rad, (roll, pitch, yaw)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float))
        if self.position.shape != (3,) or self.orientation.shape != (3,):
            raise ValueError("BodyPose needs 3-vectors for position and orientation")

    @property
    def roll(self) -> float:
        return float(self.orientation[0])

    @property
    def pitch(self) -> float:
        return float(self.orientation[1])

    @property
    def yaw(self) -> float:
        return float(self.orientation[2])

    def as_vector(self) -> np.ndarray:
        """6-vector (x, y, z, roll, pitch, yaw)."""
        return np.concatenate([self.position, self.orientation])


@dataclass(frozen=True)
class RobotState:
    """Body pose, world twist, and base-relative foot positions.

    ``foot_positions`` are relative to the base origin but expressed in
    world-aligned axes (that is what enters the moment arms of the
    centroidal dynamics).  ``foot_velocities`` are the matching relative
    velocities; they only feed the swing-leg damping term and default to
    zero when unknown.
    """

    pose: BodyPose
    twist: np.ndarray                             # (6,) linear m/s then angular rad/s
    foot_positions: np.ndarray                    # (4, 3) m
    foot_velocities: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))

    def __post_init__(self):
        object.__setattr__(self, "twist", np.asarray(self.twist, dtype=float))
        object.__setattr__(self, "foot_positions", np.asarray(self.foot_positions, dtype=float))
        object.__setattr__(self, "foot_velocities", np.asarray(self.foot_velocities, dtype=float))
        if self.twist.shape != (6,):
            raise ValueError("twist must be a 6-vector")
        if self.foot_positions.shape != (NUM_FEET, 3):
            raise ValueError("foot_positions must be 4x3")
        if self.foot_velocities.shape != (NUM_FEET, 3):
            raise ValueError("foot_velocities must be 4x3")

    @property
    def linear_velocity(self) -> np.ndarray:
        return self.twist[:3]

    @property
    def angular_velocity(self) -> np.ndarray:
        return self.twist[3:]


@dataclass(frozen=True)
class FootForces:
    """World-frame ground-reaction forces, one 3-vector per foot."""

    forces: np.ndarray  # (4, 3) N

    def __post_init__(self):
        object.__setattr__(self, "forces", np.asarray(self.forces, dtype=float))
        if self.forces.shape != (NUM_FEET, 3):
            raise ValueError("forces must be 4x3")

    @staticmethod
    def zero() -> "FootForces":
        return FootForces(np.zeros((NUM_FEET, 3)))

    @staticmethod
    def from_flat(f: np.ndarray) -> "FootForces":
        return FootForces(np.asarray(f, dtype=float).reshape(NUM_FEET, 3))

    def flat(self) -> np.ndarray:
        return self.forces.reshape(-1)


@dataclass(frozen=True)
class PhysicalParams:
    """Robot constants.

    Defaults model a light Go1/A1-class quadruped.  None of these values
    are ground truth; they are repo constants carried in config.
    """

    mass: float = 12.0
    body_inertia: np.ndarray = field(
        default_factory=lambda: np.diag([0.12, 0.14, 0.13])
    )  # kg m^2, body frame; near-isotropic so the yaw-only inertia
    # approximation stays within a few percent over the working tilt range
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 9.81]))
    friction_mu: float = 0.6
    fz_min: float = 5.0
    default_foot_positions: np.ndarray = field(
        default_factory=lambda: np.array(
            [
                [0.21, 0.13, -0.40],
                [0.21, -0.13, -0.40],
                [-0.21, 0.13, -0.40],
                [-0.21, -0.13, -0.40],
            ]
        )
    )  # base-relative, body frame
    hip_offsets: np.ndarray = field(
        default_factory=lambda: np.array(
            [
                [0.21, 0.093, 0.0],
                [0.21, -0.093, 0.0],
                [-0.21, 0.093, 0.0],
                [-0.21, -0.093, 0.0],
            ]
        )
    )
    thigh_length: float = 0.25
    shank_length: float = 0.25
    hip_lateral: float = 0.037  # abduction link, +y for left legs

    def __post_init__(self):
        object.__setattr__(self, "body_inertia", np.asarray(self.body_inertia, dtype=float))
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))
        object.__setattr__(
            self, "default_foot_positions", np.asarray(self.default_foot_positions, dtype=float)
        )
        object.__setattr__(self, "hip_offsets", np.asarray(self.hip_offsets, dtype=float))
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not np.allclose(self.body_inertia, self.body_inertia.T, atol=1e-12):
            raise ValueError("body_inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(self.body_inertia) <= 0):
            raise ValueError("body_inertia must be positive-definite")
        if self.friction_mu < 0 or self.fz_min < 0:
            raise ValueError("friction_mu and fz_min must be nonnegative")

    @property
    def gravity_aug(self) -> np.ndarray:
        """6-vector (g, 0_3) subtracted in q_dd = M f - g_aug."""
        return np.concatenate([self.gravity, np.zeros(3)])

    @property
    def weight(self) -> float:
        return self.mass * float(np.linalg.norm(self.gravity))


def rot_z(psi: float) -> np.ndarray:
    """Yaw rotation matrix."""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_zyx(orientation: np.ndarray) -> np.ndarray:
    """Full body rotation R = Rz(yaw) Ry(pitch) Rx(roll)."""
    phi, theta, psi = float(orientation[0]), float(orientation[1]), float(orientation[2])
    return rot_z(psi) @ rot_y(theta) @ rot_x(phi)


def skew(p: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(p) @ v == p x v."""
    return np.array(
        [
            [0.0, -p[2], p[1]],
            [p[2], 0.0, -p[0]],
            [-p[1], p[0], 0.0],
        ]
    )


def inertia_world(psi: float, body_inertia: np.ndarray) -> np.ndarray:
    """World-frame inertia under the yaw-only approximation."""
    R = rot_z(psi)
    return R @ body_inertia @ R.T


def build_M(state: RobotState, params: PhysicalParams) -> np.ndarray:
    """Assemble the 6x12 inverse-inertia map of the linearized dynamics.

    Top rows map each foot force to linear acceleration (I3/m); bottom rows
    map a force at foot i to world angular acceleration through the
    yaw-rotated inertia: Iw^-1 [p_i]x.
    """
    Iw = inertia_world(state.pose.yaw, params.body_inertia)
    Iw_inv = np.linalg.inv(Iw)
    M = np.zeros((6, 12))
    eye_over_m = np.eye(3) / params.mass
    for i in range(NUM_FEET):
        M[:3, 3 * i : 3 * i + 3] = eye_over_m
        M[3:, 3 * i : 3 * i + 3] = Iw_inv @ skew(state.foot_positions[i])
    return M


def linear_dynamics(M: np.ndarray, f: FootForces, gravity: np.ndarray) -> np.ndarray:
    """q_dd = M f - (gravity, 0_3)."""
    g_aug = np.concatenate([np.asarray(gravity, dtype=float), np.zeros(3)])
    return M @ f.flat() - g_aug


def nonlinear_centroidal(state: RobotState, f: FootForces, params: PhysicalParams) -> np.ndarray:
    """Nonlinear centroidal dynamics used as the simulation oracle.

    Linear part: sum(f_i)/m - g.  Angular part: Iw^-1 sum(p_i x f_i) with
    the world inertia built from the *complete* Euler rotation, which is
    what makes this strictly more faithful than the yaw-only M matrix away
    from zero roll/pitch.  Coriolis is dropped.
    """
    forces = f.forces
    lin = forces.sum(axis=0) / params.mass - params.gravity
    R = rot_zyx(state.pose.orientation)
    Iw = R @ params.body_inertia @ R.T
    torque = np.cross(state.foot_positions, forces).sum(axis=0)
    ang = np.linalg.solve(Iw, torque)
    return np.concatenate([lin, ang])


def euler_rates_to_omega(psi: float, euler_rates: np.ndarray) -> np.ndarray:
    """Small roll/pitch approximation omega = Rz(psi) @ Theta_dot."""
    return rot_z(psi) @ np.asarray(euler_rates, dtype=float)


def omega_to_euler_rates(psi: float, omega: np.ndarray) -> np.ndarray:
    """Inverse map Theta_dot = Rz(psi)^T @ omega (used when integrating)."""
    return rot_z(psi).T @ np.asarray(omega, dtype=float)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return -((-np.asarray(a) + math.pi) % (2.0 * math.pi) - math.pi)

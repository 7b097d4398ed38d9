"""The 500 Hz model-based low-level controller.

Each tick: PD on the commanded base pose gives a target acceleration, the
force QP allocates stance-foot ground-reaction forces for it, swing feet
get placement targets (velocity-error shift plus a half-sine lift over the
primitive cycle) tracked by a PD force, and everything maps to joint
torques through tau = J^T f.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from quadbelt.dynamics import (
    BodyPose,
    FootForces,
    PhysicalParams,
    RobotState,
    build_M,
    rot_z,
    rot_zyx,
    wrap_angle,
)
from quadbelt.legs import JointState, JointTorques, clamp_to_workspace, torques_from_forces
from quadbelt.primitives import Primitive
from quadbelt.qp import (
    ForceQpSolver,
    QpSettings,
    QpStatus,
    QpWeights,
    build_force_qp,
    force_qp_cost,
    solve,
)


@dataclass(frozen=True)
class BodyCommand:
    """Target base pose and twist from the user / scenario."""

    target_pose: BodyPose
    target_twist: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        object.__setattr__(self, "target_twist", np.asarray(self.target_twist, dtype=float))
        if self.target_twist.shape != (6,):
            raise ValueError("target_twist must be a 6-vector")
        if self.target_pose.position[2] <= 0:
            raise ValueError("target height must be positive")


@dataclass(frozen=True)
class GainSet:
    pose_kp: np.ndarray = field(default_factory=lambda: np.array([50.0, 50.0, 150.0, 200.0, 200.0, 50.0]))
    pose_kd: np.ndarray = field(default_factory=lambda: np.array([10.0, 10.0, 20.0, 20.0, 20.0, 10.0]))
    swing_kp: float = 300.0   # N/m
    swing_kd: float = 15.0    # N s/m
    placement_gain: float = 0.3  # s, velocity-error shift of Eq-4 style targets
    swing_apex: float = 0.08  # m, half-sine lift over the primitive cycle

    def __post_init__(self):
        object.__setattr__(self, "pose_kp", np.asarray(self.pose_kp, dtype=float))
        object.__setattr__(self, "pose_kd", np.asarray(self.pose_kd, dtype=float))
        if np.any(self.pose_kp < 0) or np.any(self.pose_kd < 0):
            raise ValueError("gains must be nonnegative")
        if self.swing_kp < 0 or self.swing_kd < 0 or self.placement_gain < 0:
            raise ValueError("gains must be nonnegative")


@dataclass(frozen=True)
class ControlOutput:
    torques: JointTorques
    foot_forces: FootForces          # QP ground-reaction forces (swing rows zero)
    qp_cost: float                   # allocation objective at the optimum
    swing_targets: np.ndarray        # (4, 3) base-relative, world axes
    qp_status: QpStatus = QpStatus.SOLVED


def target_acceleration(command: BodyCommand, state: RobotState, gains: GainSet) -> np.ndarray:
    """PD law on pose and twist errors, evaluated per axis.

    Angular errors are wrapped Euler differences; the angular PD runs in
    Euler-rate space and maps to world angular acceleration through the
    yaw rotation, so the output matches the rows of the linearized
    dynamics away from zero yaw.
    """
    pos_err = command.target_pose.position - state.pose.position
    ang_err = wrap_angle(command.target_pose.orientation - state.pose.orientation)

    psi = state.pose.yaw
    Rz = rot_z(psi)
    euler_rates = Rz.T @ state.angular_velocity
    euler_rates_d = Rz.T @ command.target_twist[3:]

    lin = gains.pose_kp[:3] * pos_err + gains.pose_kd[:3] * (command.target_twist[:3] - state.linear_velocity)
    ang_euler = gains.pose_kp[3:] * ang_err + gains.pose_kd[3:] * (euler_rates_d - euler_rates)
    return np.concatenate([lin, Rz @ ang_euler])


def swing_targets(
    state: RobotState,
    command: BodyCommand,
    params: PhysicalParams,
    gains: GainSet,
    phase: float = 0.0,
) -> np.ndarray:
    """Placement targets for all four feet, base-relative in world axes.

    Horizontal part: default stance point (rotated with the body yaw)
    shifted by placement_gain * (body velocity - commanded velocity),
    identically for every foot.  Vertical part: the treadmill surface plus
    a half-sine lift peaking mid-cycle.  Targets are projected back into
    the leg workspace when the raw point is unreachable.
    """
    vel_err = state.linear_velocity - command.target_twist[:3]
    shift = gains.placement_gain * vel_err
    shift[2] = 0.0

    psi = state.pose.yaw
    Rz = rot_z(psi)
    R_full = rot_zyx(state.pose.orientation)
    lift = gains.swing_apex * np.sin(np.pi * np.clip(phase, 0.0, 1.0))
    z_rel = lift - state.pose.position[2]

    targets = np.empty((4, 3))
    for i in range(4):
        t = Rz @ params.default_foot_positions[i] + shift
        t[2] = z_rel
        body_frame = R_full.T @ t
        clamped, was_clamped = clamp_to_workspace(i, body_frame, params)
        targets[i] = R_full @ clamped if was_clamped else t
    return targets


def swing_forces(
    targets: np.ndarray, state: RobotState, gains: GainSet, primitive: Primitive
) -> FootForces:
    """Eq-5 style PD force on swing feet; stance feet stay with the QP."""
    f = np.zeros((4, 3))
    for i in range(4):
        if primitive.feet[i]:
            err = targets[i] - state.foot_positions[i]
            f[i] = gains.swing_kp * err - gains.swing_kd * state.foot_velocities[i]
    return FootForces(f)


class LowLevelController:
    """Stateful only through the QP warm-start cache; one per environment."""

    def __init__(
        self,
        params: PhysicalParams,
        gains: GainSet = GainSet(),
        weights: QpWeights = QpWeights(),
        qp_settings: QpSettings = QpSettings(),
        friction_as_printed: bool = False,
    ):
        self.params = params
        self.gains = gains
        self.weights = weights
        self.qp_settings = qp_settings
        self._solver = ForceQpSolver(weights, qp_settings, friction_as_printed)

    def reset(self) -> None:
        self._solver.reset()

    def control_tick(
        self,
        state: RobotState,
        joints: JointState,
        command: BodyCommand,
        primitive: Primitive,
        phase: float = 0.0,
    ) -> ControlOutput:
        params = self.params
        accel = target_acceleration(command, state, self.gains)
        M = build_M(state, params)
        res = self._solver.solve(M, accel, params.gravity_aug, primitive, params.friction_mu, params.fz_min)
        qp_forces = res.forces.reshape(4, 3)

        targets = swing_targets(state, command, params, self.gains, phase)
        pd = swing_forces(targets, state, self.gains, primitive)

        # stance legs push the ground with -f_reaction; swing legs apply
        # the PD force to their own foot
        leg_forces = np.where(
            np.array(primitive.feet)[:, None], pd.forces, -qp_forces
        )
        torques = torques_from_forces(joints, leg_forces, params)

        cost = force_qp_cost(res.forces, accel, M, params.gravity_aug, self.weights)
        return ControlOutput(
            torques=torques,
            foot_forces=FootForces(qp_forces),
            qp_cost=cost,
            swing_targets=targets,
            qp_status=res.status,
        )

    def evaluate_candidate(
        self,
        state: RobotState,
        command: BodyCommand,
        primitive: Primitive,
        phase: float = 0.0,
    ) -> tuple[float, np.ndarray]:
        """Cost probe for the heuristic selector: (qp_cost, foot errors).

        Uses a cold solve so probing candidates never disturbs the warm
        cache of the running controller.
        """
        params = self.params
        accel = target_acceleration(command, state, self.gains)
        M = build_M(state, params)
        prob = build_force_qp(
            accel, M, params.gravity_aug, primitive, self.weights, params.friction_mu, params.fz_min
        )
        sol = solve(prob, self.qp_settings)
        cost = force_qp_cost(sol.x, accel, M, params.gravity_aug, self.weights)
        targets = swing_targets(state, command, params, self.gains, phase)
        errors = np.linalg.norm(targets - state.foot_positions, axis=1)
        return cost, errors

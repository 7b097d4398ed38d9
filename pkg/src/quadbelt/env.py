"""Split-belt treadmill simulator.

Two independently driven belts (left: world y > 0, right: y < 0) move
along world x under a centroidal rigid-body robot.  Stance feet stick to
belt anchors that advect with the belt; the commanded ground-reaction
force transmits only up to the simulated friction cone, and the anchor of
a saturated foot drifts with the force deficit.  Swing feet are massless
and track their placement targets as critically damped second-order
particles.  The high level acts every 200 ticks (0.4 s) by choosing a
contact primitive; the reward penalizes squared torques and body-velocity
tracking error.

The simulated friction under a foot can differ from the mu the controller
believes in (that is the whole point of the slip scenario), and the belt
parameters are never observable to the policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from quadbelt.control import BodyCommand, GainSet, LowLevelController
from quadbelt.dynamics import (
    NUM_FEET,
    BodyPose,
    FootForces,
    PhysicalParams,
    RobotState,
    nonlinear_centroidal,
    rot_z,
    rot_zyx,
    wrap_angle,
)
from quadbelt.legs import (
    JointState,
    UnreachableTarget,
    clamp_to_workspace,
    inverse_kinematics,
)
from quadbelt.primitives import Primitive, primitive_by_id
from quadbelt.qp import QpSettings, QpWeights

ATTACH_NONE = 0
ATTACH_LEFT = 1
ATTACH_RIGHT = 2
ATTACH_FIXED = 3
ATTACH_NAMES = ("none", "left_belt", "right_belt", "fixed")

YAW_CHOICES_DEG = (0, 30, -30, 60, -60, 90, -90, 120, -120, 150, -150, 180)


class StepAfterDone(RuntimeError):
    """step_high_level called on a finished episode."""


class EpisodeTooShort(ValueError):
    """Energy metric asked for an episode shorter than the metric window."""


class EpisodeFell(ValueError):
    """Energy metric asked for a fallen episode (report failure instead)."""


@dataclass(frozen=True)
class Scenario:
    belt_speed_left: float = 0.0
    belt_speed_right: float = 0.0
    left_active: bool = True
    right_active: bool = True
    commanded_yaw: float = 0.0
    bridge: bool = False
    slip_foot: int | None = None
    friction_override: float = 0.0

    def __post_init__(self):
        if abs(self.belt_speed_left) > 0.5 or abs(self.belt_speed_right) > 0.5:
            raise ValueError("belt speeds limited to |v| <= 0.5 m/s")
        if self.friction_override < 0:
            raise ValueError("friction_override must be nonnegative")
        if self.slip_foot is not None and not 0 <= self.slip_foot < NUM_FEET:
            raise ValueError("slip_foot must be a foot index")

    def describe(self) -> str:
        parts = [
            f"vl={self.belt_speed_left:+.2f}",
            f"vr={self.belt_speed_right:+.2f}",
            f"act={int(self.left_active)}{int(self.right_active)}",
            f"yaw={math.degrees(self.commanded_yaw):.0f}",
        ]
        if self.bridge:
            parts.append("bridge")
        if self.slip_foot is not None:
            parts.append(f"slip{self.slip_foot}:{self.friction_override:.2f}")
        return ",".join(parts)


@dataclass(frozen=True)
class EnvParams:
    dt: float = 0.002
    ticks_per_decision: int = 200  # 500 Hz low level, 2.5 Hz high level
    episode_seconds: float = 10.0
    fall_roll: float = 0.5
    fall_pitch: float = 0.5
    fall_height: float = 0.15
    start_height: float = 0.40
    swing_omega: float = 25.0     # rad/s, critically damped swing tracking
    slip_mobility: float = 0.01   # m/s of anchor drift per N of cone deficit
    torque_penalty: float = 0.0025
    observe_twist: bool = False
    bridge_x_min: float = 0.05
    log_contacts: bool = True

    @property
    def max_decisions(self) -> int:
        return int(round(self.episode_seconds / (self.dt * self.ticks_per_decision)))

    @property
    def obs_layout(self) -> str:
        return "v1-twist" if self.observe_twist else "v1-notwist"

    @property
    def obs_dim(self) -> int:
        return (4 + 6 + 12 + 9) if self.observe_twist else (4 + 12 + 9)


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    done: bool
    next_obs: np.ndarray


@dataclass
class EpisodeStats:
    total_reward: float = 0.0
    mean_sq_torque: float = 0.0
    fell: bool = False
    primitive_histogram: np.ndarray = field(default_factory=lambda: np.zeros(9, dtype=np.int64))
    contact_log: list = field(default_factory=list)
    decisions: int = 0
    ticks: int = 0
    seconds: float = 0.0


def observation_dim(observe_twist: bool = False) -> int:
    return EnvParams(observe_twist=observe_twist).obs_dim


def sample_training_scenario(rng: np.random.Generator) -> Scenario:
    """Training distribution: random belt speeds, optional paused side,
    commanded yaw from the 30-degree grid."""
    vl = float(rng.uniform(-0.3, 0.3))
    vr = float(rng.uniform(-0.3, 0.3))
    left_active = True
    right_active = True
    if rng.uniform() < 1.0 / 3.0:
        if rng.uniform() < 0.5:
            left_active = False
        else:
            right_active = False
    yaw = math.radians(YAW_CHOICES_DEG[int(rng.integers(len(YAW_CHOICES_DEG)))])
    return Scenario(
        belt_speed_left=vl,
        belt_speed_right=vr,
        left_active=left_active,
        right_active=right_active,
        commanded_yaw=yaw,
    )


class TreadmillEnv:
    """One rollout context; instances share nothing."""

    def __init__(
        self,
        params: PhysicalParams = PhysicalParams(),
        gains: GainSet = GainSet(),
        weights: QpWeights = QpWeights(),
        qp_settings: QpSettings = QpSettings(),
        env_params: EnvParams = EnvParams(),
        friction_as_printed: bool = False,
    ):
        self.params = params
        self.env_params = env_params
        self.llc = LowLevelController(params, gains, weights, qp_settings, friction_as_printed)
        self.scenario = Scenario()
        self.command = self._command_for(self.scenario)
        self._reset_internal(self.scenario)

    # -- setup ---------------------------------------------------------

    def _command_for(self, scenario: Scenario) -> BodyCommand:
        pose = BodyPose(
            np.array([0.0, 0.0, self.env_params.start_height]),
            np.array([0.0, 0.0, scenario.commanded_yaw]),
        )
        return BodyCommand(target_pose=pose, target_twist=np.zeros(6))

    def _region_of(self, world_xy: np.ndarray) -> int:
        if self.scenario.bridge and world_xy[0] >= self.env_params.bridge_x_min:
            return ATTACH_FIXED
        return ATTACH_LEFT if world_xy[1] >= 0.0 else ATTACH_RIGHT

    def _belt_velocity(self, attach: int) -> np.ndarray:
        s = self.scenario
        if attach == ATTACH_LEFT and s.left_active:
            return np.array([s.belt_speed_left, 0.0, 0.0])
        if attach == ATTACH_RIGHT and s.right_active:
            return np.array([s.belt_speed_right, 0.0, 0.0])
        return np.zeros(3)

    def _sim_friction(self, foot: int) -> float:
        if self.scenario.slip_foot == foot:
            return self.scenario.friction_override
        return self.params.friction_mu

    def _reset_internal(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.command = self._command_for(scenario)
        ep = self.env_params
        yaw = scenario.commanded_yaw
        Rz = rot_z(yaw)
        pos = np.array([0.0, 0.0, ep.start_height])
        feet_rel = (Rz @ self.params.default_foot_positions.T).T
        # put every foot on the surface regardless of the default-z constant
        feet_rel[:, 2] = -ep.start_height

        self.body_pos = pos
        self.body_eul = np.array([0.0, 0.0, yaw])
        self.body_vel = np.zeros(3)
        self.body_omega = np.zeros(3)
        self.foot_rel = feet_rel.copy()
        self.foot_rel_vel = np.zeros((NUM_FEET, 3))
        self.attach = np.zeros(NUM_FEET, dtype=np.int64)
        self.anchor = np.zeros((NUM_FEET, 3))
        self.slipping = np.zeros(NUM_FEET, dtype=bool)
        self._slip_drift = np.zeros((NUM_FEET, 3))
        for i in range(NUM_FEET):
            world = pos + feet_rel[i]
            self.attach[i] = self._region_of(world)
            self.anchor[i] = np.array([world[0], world[1], 0.0])
        self.time = 0.0
        self.tick = 0
        self.done = False
        self.fallen = False
        self.prev_action = 0
        self.stats = EpisodeStats()
        self._sq_torque_sum = 0.0
        self.llc.reset()

    def reset(self, scenario: Scenario | None = None) -> np.ndarray:
        self._reset_internal(scenario if scenario is not None else self.scenario)
        return self.observe()

    # -- views ---------------------------------------------------------

    @property
    def state(self) -> RobotState:
        return RobotState(
            pose=BodyPose(self.body_pos.copy(), self.body_eul.copy()),
            twist=np.concatenate([self.body_vel, self.body_omega]),
            foot_positions=self.foot_rel.copy(),
            foot_velocities=self.foot_rel_vel.copy(),
        )

    def joint_state(self) -> JointState:
        R = rot_zyx(self.body_eul)
        angles = np.empty(12)
        for i in range(NUM_FEET):
            body_frame = R.T @ self.foot_rel[i]
            try:
                angles[3 * i : 3 * i + 3] = inverse_kinematics(i, body_frame, self.params)
            except UnreachableTarget:
                clamped, _ = clamp_to_workspace(i, body_frame, self.params)
                angles[3 * i : 3 * i + 3] = inverse_kinematics(i, clamped, self.params)
        return JointState(angles)

    def observe(self) -> np.ndarray:
        """Body height/tilt, yaw error, optional twist, body-frame foot
        positions, one-hot of the previous primitive."""
        ep = self.env_params
        yaw_err = wrap_angle(self.body_eul[2] - self.scenario.commanded_yaw)
        head = [self.body_pos[2], self.body_eul[0], self.body_eul[1], yaw_err]
        parts = [np.array(head)]
        if ep.observe_twist:
            parts.append(np.concatenate([self.body_vel, self.body_omega]))
        Rz_T = rot_z(-self.body_eul[2])
        parts.append((Rz_T @ self.foot_rel.T).T.reshape(-1))
        onehot = np.zeros(9)
        onehot[self.prev_action] = 1.0
        parts.append(onehot)
        return np.concatenate(parts)

    # -- physics -------------------------------------------------------

    def _effective_primitive(self, commanded: Primitive) -> Primitive:
        feet = tuple(
            bool(commanded.feet[i]) or self.attach[i] == ATTACH_NONE for i in range(NUM_FEET)
        )
        if feet == commanded.feet:
            return commanded
        return Primitive(id=commanded.id, name=commanded.name + "*", feet=feet)

    def _check_workspace_detach(self) -> None:
        R = rot_zyx(self.body_eul)
        for i in range(NUM_FEET):
            if self.attach[i] == ATTACH_NONE:
                continue
            body_frame = R.T @ self.foot_rel[i]
            try:
                inverse_kinematics(i, body_frame, self.params)
            except UnreachableTarget:
                self.attach[i] = ATTACH_NONE
                self.slipping[i] = False
                self.foot_rel_vel[i] = -self.body_vel  # world-stationary at release

    def physics_tick(
        self,
        foot_forces: FootForces,
        swing_targets: np.ndarray,
        commanded: Primitive,
    ) -> None:
        """Advance the world by dt under the controller outputs."""
        ep = self.env_params
        dt = ep.dt
        params = self.params

        applied = np.zeros((NUM_FEET, 3))
        for i in range(NUM_FEET):
            attached_stance = self.attach[i] != ATTACH_NONE and not commanded.feet[i]
            if not attached_stance:
                self.slipping[i] = False
                continue
            f = foot_forces.forces[i].copy()
            fz = max(f[2], 0.0)
            f[2] = fz
            mu = self._sim_friction(i)
            ft = f[:2]
            ft_norm = float(np.hypot(ft[0], ft[1]))
            limit = mu * fz
            if ft_norm > limit + 1e-12:
                scale = limit / ft_norm if ft_norm > 0 else 0.0
                clamped = ft * scale
                deficit = ft - clamped
                f[:2] = clamped
                self.slipping[i] = True
                self._slip_drift[i, :2] = -ep.slip_mobility * deficit
            else:
                self.slipping[i] = False
                self._slip_drift[i] = 0.0
            applied[i] = f

        state = self.state
        accel = nonlinear_centroidal(state, FootForces(applied), params)

        # semi-implicit body integration; orientation through the inverse
        # Euler-rate map
        self.body_vel = self.body_vel + accel[:3] * dt
        self.body_pos = self.body_pos + self.body_vel * dt
        self.body_omega = self.body_omega + accel[3:] * dt
        euler_rates = rot_z(self.body_eul[2]).T @ self.body_omega
        self.body_eul = self.body_eul + euler_rates * dt
        self.body_eul[0] = wrap_angle(self.body_eul[0])
        self.body_eul[1] = wrap_angle(self.body_eul[1])

        for i in range(NUM_FEET):
            if self.attach[i] != ATTACH_NONE and not commanded.feet[i]:
                anchor_vel = self._belt_velocity(self.attach[i]) + self._slip_drift[i]
                self.anchor[i] = self.anchor[i] + anchor_vel * dt
                self.anchor[i, 2] = 0.0
                self.foot_rel[i] = self.anchor[i] - self.body_pos
                self.foot_rel_vel[i] = anchor_vel - self.body_vel
            elif commanded.feet[i]:
                if self.attach[i] != ATTACH_NONE:
                    # liftoff: the foot leaves its anchor
                    self.attach[i] = ATTACH_NONE
                    self.slipping[i] = False
                    self.foot_rel_vel[i] = -self.body_vel
                w2 = ep.swing_omega * ep.swing_omega
                acc = w2 * (swing_targets[i] - self.foot_rel[i]) - 2.0 * ep.swing_omega * self.foot_rel_vel[i]
                self.foot_rel_vel[i] = self.foot_rel_vel[i] + acc * dt
                self.foot_rel[i] = self.foot_rel[i] + self.foot_rel_vel[i] * dt
                world_z = self.body_pos[2] + self.foot_rel[i, 2]
                world_vz = self.body_vel[2] + self.foot_rel_vel[i, 2]
                if world_z <= 0.0 and world_vz < 0.0:
                    world = self.body_pos + self.foot_rel[i]
                    self.attach[i] = self._region_of(world)
                    self.anchor[i] = np.array([world[0], world[1], 0.0])
                    self.foot_rel[i, 2] = -self.body_pos[2]
                    self.foot_rel_vel[i] = self._belt_velocity(self.attach[i]) - self.body_vel
                    self.slipping[i] = False
            else:
                # commanded stance but detached: the leg holds its pose
                self.foot_rel_vel[i] = np.zeros(3)
                world_z = self.body_pos[2] + self.foot_rel[i, 2]
                if world_z <= 0.0 and self.body_vel[2] < 0.0:
                    world = self.body_pos + self.foot_rel[i]
                    self.attach[i] = self._region_of(world)
                    self.anchor[i] = np.array([world[0], world[1], 0.0])
                    self.foot_rel[i, 2] = -self.body_pos[2]
                    self.foot_rel_vel[i] = self._belt_velocity(self.attach[i]) - self.body_vel

        self._check_workspace_detach()

        self.time += dt
        self.tick += 1
        if (
            abs(self.body_eul[0]) > ep.fall_roll
            or abs(self.body_eul[1]) > ep.fall_pitch
            or self.body_pos[2] < ep.fall_height
        ):
            self.fallen = True
            self.done = True

    # -- high level ----------------------------------------------------

    def step_high_level(
        self, action: int, command: BodyCommand | None = None
    ) -> tuple[np.ndarray, float, bool]:
        if self.done:
            raise StepAfterDone("episode is finished; call reset()")
        if command is None:
            command = self.command
        ep = self.env_params
        commanded = primitive_by_id(action)

        sq_tau = 0.0
        sq_verr = 0.0
        ran = 0
        for t in range(ep.ticks_per_decision):
            phase = t / ep.ticks_per_decision
            effective = self._effective_primitive(commanded)
            joints = self.joint_state()
            out = self.llc.control_tick(self.state, joints, command, effective, phase)
            self.physics_tick(out.foot_forces, out.swing_targets, effective)

            sq_tau += out.torques.squared_norm()
            verr = self.body_vel - command.target_twist[:3]
            sq_verr += float(verr @ verr)
            ran += 1
            self._sq_torque_sum += out.torques.squared_norm()
            if ep.log_contacts:
                self.stats.contact_log.append(
                    (
                        self.tick,
                        round(self.time, 6),
                        tuple(bool(self.attach[i] != ATTACH_NONE) for i in range(NUM_FEET)),
                        action,
                    )
                )
            if self.fallen:
                break

        reward = 1.0 - ep.torque_penalty * (sq_tau / ran) - (sq_verr / ran)
        self.prev_action = action
        self.stats.decisions += 1
        self.stats.primitive_histogram[action] += 1
        self.stats.ticks += ran
        self.stats.seconds = self.time
        self.stats.total_reward += reward
        self.stats.mean_sq_torque = self._sq_torque_sum / max(self.stats.ticks, 1)
        self.stats.fell = self.fallen

        if self.time >= ep.episode_seconds - 1e-9:
            self.done = True
        return self.observe(), float(reward), self.done


def energy_metric(stats: EpisodeStats, window_seconds: float = 10.0) -> float:
    """Mean squared-torque-norm per tick over the metric window."""
    if stats.fell:
        raise EpisodeFell("episode fell; report failure, not energy")
    if stats.seconds + 1e-9 < window_seconds:
        raise EpisodeTooShort(f"episode ran {stats.seconds:.2f}s < {window_seconds}s")
    return stats.mean_sq_torque


def scenario_with_speed(speed: float, yaw: float = 0.0) -> Scenario:
    """Both belts driven at the same speed (the parallel-motion test)."""
    return Scenario(belt_speed_left=speed, belt_speed_right=speed, commanded_yaw=yaw)


def one_belt_scenario(speed: float = 0.3, yaw: float = 0.0, moving_side: str = "left") -> Scenario:
    if moving_side == "left":
        return Scenario(belt_speed_left=speed, belt_speed_right=0.0, right_active=False, commanded_yaw=yaw)
    return Scenario(belt_speed_left=0.0, belt_speed_right=speed, left_active=False, commanded_yaw=yaw)


def bridge_scenario(speed: float = 0.2) -> Scenario:
    return Scenario(belt_speed_left=speed, belt_speed_right=speed, bridge=True)


def banana_peel_scenario(foot: int = 2, mu: float = 0.0) -> Scenario:
    return Scenario(slip_foot=foot, friction_override=mu)

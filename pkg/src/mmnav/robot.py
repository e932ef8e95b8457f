"""Kinematic model of the Stretch-like mobile manipulator.

The robot has 10 actuated joints: base translation + rotation (velocity
controlled), arm lift + extension, 3 wrist angles, gripper aperture
(position controlled) and camera pan + tilt.  The arm extends sideways
along the base -y axis; the head camera sits at a fixed height on the mast.

The batched array functions are the single source of truth for integration,
forward kinematics and collision geometry; the scalar API wraps them with
one-element batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import RobotConfig
from .errors import InvalidActionError
from .geom import Box3, Pose2, Pose3, quat_from_yaw, quat_mul, quat_from_axis_angle, wrap_angle

# position-controlled joint indices (state.joints / joint_vels layout)
LIFT, EXTENSION, WRIST_YAW, WRIST_PITCH, WRIST_ROLL, GRIPPER, CAM_PAN, CAM_TILT = range(8)
NUM_JOINTS = 8
JOINT_NAMES = ("lift", "extension", "wrist_yaw", "wrist_pitch", "wrist_roll",
               "gripper", "cam_pan", "cam_tilt")

# full command layout: [v, omega] + the 8 position targets above
NUM_COMMANDS = 10


@dataclass(frozen=True)
class Action:
    """One policy command: base velocities + joint position targets.

    ``a_robot`` is [base_lin_vel_cmd, base_ang_vel_cmd, lift, extension,
    wrist_yaw, wrist_pitch, wrist_roll, gripper]; ``a_cam`` is [pan, tilt].
    Commands are clamped by the consumer (the simulator), not the producer.
    """

    a_robot: np.ndarray
    a_cam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a_robot", np.asarray(self.a_robot, dtype=np.float64))
        object.__setattr__(self, "a_cam", np.asarray(self.a_cam, dtype=np.float64))
        if self.a_robot.shape != (8,) or self.a_cam.shape != (2,):
            raise InvalidActionError("action must be 8 robot + 2 camera commands")

    def as_commands(self) -> np.ndarray:
        return np.concatenate([self.a_robot, self.a_cam])


@dataclass(frozen=True)
class RobotState:
    """Full kinematic state; joints in the canonical 8-joint order."""

    base: Pose2 = field(default_factory=Pose2)
    base_lin_vel: float = 0.0
    base_ang_vel: float = 0.0
    joints: np.ndarray = field(default_factory=lambda: np.zeros(NUM_JOINTS))
    joint_vels: np.ndarray = field(default_factory=lambda: np.zeros(NUM_JOINTS))

    def __post_init__(self):
        object.__setattr__(self, "joints", np.asarray(self.joints, dtype=np.float64))
        object.__setattr__(self, "joint_vels", np.asarray(self.joint_vels, dtype=np.float64))

    @property
    def lift(self) -> float:
        return float(self.joints[LIFT])

    @property
    def extension(self) -> float:
        return float(self.joints[EXTENSION])

    @property
    def gripper(self) -> float:
        return float(self.joints[GRIPPER])

    @property
    def cam_pan(self) -> float:
        return float(self.joints[CAM_PAN])

    @property
    def cam_tilt(self) -> float:
        return float(self.joints[CAM_TILT])


class RobotModel:
    """Limits and geometry derived from a RobotConfig, in array form."""

    def __init__(self, cfg: RobotConfig | None = None):
        self.cfg = cfg or RobotConfig()
        c = self.cfg
        self.joint_lo = np.array([c.lift_min, c.extension_min, c.wrist_min, c.wrist_min,
                                  c.wrist_min, c.gripper_min, c.pan_min, c.tilt_min])
        self.joint_hi = np.array([c.lift_max, c.extension_max, c.wrist_max, c.wrist_max,
                                  c.wrist_max, c.gripper_max, c.pan_max, c.tilt_max])
        self.joint_vel_max = np.array([c.lift_vel_max, c.extension_vel_max, c.wrist_vel_max,
                                       c.wrist_vel_max, c.wrist_vel_max, c.gripper_vel_max,
                                       c.pan_vel_max, c.tilt_vel_max])
        self.base_lin_vel_max = c.base_lin_vel_max
        self.base_ang_vel_max = c.base_ang_vel_max
        # normalized-action mapping: velocities scale by the limit, position
        # targets map [-1, 1] onto the full joint range
        self.joint_mid = 0.5 * (self.joint_lo + self.joint_hi)
        self.joint_half = 0.5 * (self.joint_hi - self.joint_lo)
        # footprint diagonal: the lateral clearance the whole base needs
        self.footprint_diagonal = math.hypot(c.base_length, c.base_width)

    # -- integration ------------------------------------------------------

    def step_arrays(self, base: np.ndarray, joints: np.ndarray,
                    commands: np.ndarray, dt: float):
        """Advance a batch of robots by one control period.

        base: (N, 3) [x, y, theta]; joints: (N, 8); commands: (N, 10)
        physical units.  Returns (base', joints', base_vels (N, 2),
        joint_vels (N, 8)).  Base follows a unicycle model with clamped
        velocity commands; every other joint moves toward its clamped target
        at most at its velocity limit.
        """
        v = np.clip(commands[:, 0], -self.base_lin_vel_max, self.base_lin_vel_max)
        w = np.clip(commands[:, 1], -self.base_ang_vel_max, self.base_ang_vel_max)
        theta = base[:, 2]
        nb = np.empty_like(base)
        nb[:, 0] = base[:, 0] + v * np.cos(theta) * dt
        nb[:, 1] = base[:, 1] + v * np.sin(theta) * dt
        nt = np.mod(theta + w * dt + np.pi, 2.0 * np.pi) - np.pi
        nb[:, 2] = np.where(nt == -np.pi, np.pi, nt)  # keep theta in (-pi, pi]

        targets = np.clip(commands[:, 2:], self.joint_lo, self.joint_hi)
        delta = np.clip(targets - joints, -self.joint_vel_max * dt, self.joint_vel_max * dt)
        nj = np.clip(joints + delta, self.joint_lo, self.joint_hi)
        return nb, nj, np.stack([v, w], axis=1), (nj - joints) / dt

    # -- forward kinematics -------------------------------------------------

    def gripper_pos_arrays(self, base: np.ndarray, joints: np.ndarray) -> np.ndarray:
        """World gripper position for a batch; (N, 3)."""
        c = self.cfg
        reach = c.arm_body_len + joints[:, EXTENSION]
        ct, st = np.cos(base[:, 2]), np.sin(base[:, 2])
        # base-frame offset (arm_offset_x, -reach, lift) rotated into the world
        out = np.empty((base.shape[0], 3))
        out[:, 0] = base[:, 0] + c.arm_offset_x * ct + reach * st
        out[:, 1] = base[:, 1] + c.arm_offset_x * st - reach * ct
        out[:, 2] = joints[:, LIFT]
        return out

    def camera_pose_arrays(self, base: np.ndarray, joints: np.ndarray):
        """Camera origin and world-from-camera rotation for a batch.

        Camera frame: x = optical axis, y left, z up.  Orientation composes
        base heading, then pan about z, then tilt about the camera y axis
        (negative tilt looks down).  Returns (pos (N, 3), R (N, 3, 3)).
        """
        n = base.shape[0]
        pos = np.empty((n, 3))
        pos[:, 0:2] = base[:, 0:2]
        pos[:, 2] = self.cfg.head_height
        yaw = base[:, 2] + joints[:, CAM_PAN]
        tilt = joints[:, CAM_TILT]
        cy, sy = np.cos(yaw), np.sin(yaw)
        ct, st = np.cos(tilt), np.sin(tilt)
        # Rz(yaw) @ Ry(-tilt)
        rot = np.empty((n, 3, 3))
        rot[:, 0, 0] = cy * ct
        rot[:, 0, 1] = -sy
        rot[:, 0, 2] = -cy * st
        rot[:, 1, 0] = sy * ct
        rot[:, 1, 1] = cy
        rot[:, 1, 2] = -sy * st
        rot[:, 2, 0] = st
        rot[:, 2, 1] = 0.0
        rot[:, 2, 2] = ct
        return pos, rot

    # -- collision geometry --------------------------------------------------

    def collision_boxes_arrays(self, base: np.ndarray, joints: np.ndarray) -> np.ndarray:
        """World AABBs of base, mast, arm and gripper; (N, 4, 6) packed.

        Each part is a box in the base frame whose rotated corners are
        re-wrapped in a world AABB (conservative for non-axis-aligned
        headings).  The arm/gripper boxes ride on lift and extension so that
        overhanging obstacles can be cleared by lowering the arm.
        """
        c = self.cfg
        n = base.shape[0]
        reach = c.arm_body_len + joints[:, EXTENSION]
        lift = joints[:, LIFT]
        zeros = np.zeros(n)
        ones = np.ones(n)

        def frame_box(xlo, xhi, ylo, yhi, zlo, zhi):
            # base-frame box -> world AABB of its rotated footprint
            xs = np.stack([xlo, xhi])  # (2, N)
            ys = np.stack([ylo, yhi])
            ct, st = np.cos(base[:, 2]), np.sin(base[:, 2])
            # rotate the 4 footprint corners
            cx = np.stack([xs[0], xs[0], xs[1], xs[1]])  # (4, N)
            cy = np.stack([ys[0], ys[1], ys[0], ys[1]])
            wx = base[:, 0] + cx * ct - cy * st
            wy = base[:, 1] + cx * st + cy * ct
            out = np.empty((n, 6))
            out[:, 0] = wx.min(axis=0)
            out[:, 1] = wy.min(axis=0)
            out[:, 2] = zlo
            out[:, 3] = wx.max(axis=0)
            out[:, 4] = wy.max(axis=0)
            out[:, 5] = zhi
            return out

        half_l, half_w, half_m = 0.5 * c.base_length, 0.5 * c.base_width, 0.5 * c.mast_side
        half_t = 0.5 * c.arm_thickness
        ox = c.arm_offset_x
        boxes = np.empty((n, 4, 6))
        boxes[:, 0] = frame_box(-half_l * ones, half_l * ones, -half_w * ones, half_w * ones,
                                zeros, c.base_height * ones)
        boxes[:, 1] = frame_box(-half_m * ones, half_m * ones, -half_m * ones, half_m * ones,
                                c.base_height * ones, c.mast_height * ones)
        boxes[:, 2] = frame_box((ox - half_t) * ones, (ox + half_t) * ones, -reach, zeros,
                                lift - half_t, lift + half_t)
        # gripper fingers wrap the grasp point (at lift height) from above;
        # bottom face flush with the arm tube so tabletop grasps stay clear
        boxes[:, 3] = frame_box((ox - 0.5 * c.gripper_size_x) * ones,
                                (ox + 0.5 * c.gripper_size_x) * ones,
                                -reach - 0.02, -reach - 0.02 + c.gripper_size_y,
                                lift - half_t, lift - half_t + c.gripper_size_z)
        return boxes

    # -- normalized actions ---------------------------------------------------

    def commands_from_normalized(self, a: np.ndarray) -> np.ndarray:
        """Map policy outputs (approx. [-1, 1] per dim) to physical commands.

        Velocities scale with their limits; position targets span the full
        joint range.  Out-of-range values are left to the integrator's clamp.
        """
        a = np.asarray(a, dtype=np.float64)
        out = np.empty_like(a)
        out[..., 0] = a[..., 0] * self.base_lin_vel_max
        out[..., 1] = a[..., 1] * self.base_ang_vel_max
        out[..., 2:] = self.joint_mid + a[..., 2:] * self.joint_half
        return out

    def normalized_from_commands(self, cmd: np.ndarray) -> np.ndarray:
        cmd = np.asarray(cmd, dtype=np.float64)
        out = np.empty_like(cmd)
        out[..., 0] = cmd[..., 0] / self.base_lin_vel_max
        out[..., 1] = cmd[..., 1] / self.base_ang_vel_max
        out[..., 2:] = (cmd[..., 2:] - self.joint_mid) / self.joint_half
        return out

    def clamp_joints(self, joints: np.ndarray) -> np.ndarray:
        return np.clip(joints, self.joint_lo, self.joint_hi)


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------

def step_kinematics(model: RobotModel, s: RobotState, a: Action, dt: float) -> RobotState:
    """Advance one robot by dt seconds; rejects non-finite actions."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    cmd = a.as_commands()
    if not np.all(np.isfinite(cmd)):
        raise InvalidActionError("action contains non-finite components")
    base = np.array([[s.base.x, s.base.y, s.base.theta]])
    nb, nj, bv, jv = model.step_arrays(base, s.joints[None, :], cmd[None, :], dt)
    return RobotState(
        base=Pose2(nb[0, 0], nb[0, 1], nb[0, 2]),
        base_lin_vel=float(bv[0, 0]),
        base_ang_vel=float(bv[0, 1]),
        joints=nj[0],
        joint_vels=jv[0],
    )


def fk_gripper(model: RobotModel, s: RobotState) -> np.ndarray:
    """World-frame gripper position (the wrist point at lift height)."""
    base = np.array([[s.base.x, s.base.y, s.base.theta]])
    return model.gripper_pos_arrays(base, s.joints[None, :])[0]


def fk_camera(model: RobotModel, s: RobotState) -> Pose3:
    """World pose of the head camera (x = optical axis, y left, z up)."""
    base = np.array([[s.base.x, s.base.y, s.base.theta]])
    pos, _ = model.camera_pose_arrays(base, s.joints[None, :])
    q = quat_mul(quat_from_yaw(s.base.theta + s.cam_pan),
                 quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), -s.cam_tilt))
    return Pose3(position=pos[0], orientation=q)


def collision_boxes(model: RobotModel, s: RobotState) -> list[Box3]:
    """World AABBs for base, mast, arm and gripper."""
    base = np.array([[s.base.x, s.base.y, s.base.theta]])
    arr = model.collision_boxes_arrays(base, s.joints[None, :])[0]
    return [Box3(row[0:3], row[3:6]) for row in arr]


def neutral_state(model: RobotModel, base: Pose2 | None = None, *,
                  tilt: float = 0.0) -> RobotState:
    """A valid state with every joint mid-range, camera level by default."""
    joints = model.joint_mid.copy()
    joints[GRIPPER] = model.joint_lo[GRIPPER]
    joints[CAM_PAN] = 0.0
    joints[CAM_TILT] = np.clip(tilt, model.joint_lo[CAM_TILT], model.joint_hi[CAM_TILT])
    joints[WRIST_YAW:WRIST_ROLL + 1] = 0.0
    return RobotState(base=base or Pose2(), joints=joints)

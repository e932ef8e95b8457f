"""Vectorized environment: N independent episodes stepped as arrays.

All per-step work is numpy over struct-of-arrays state; the only Python
loops run at episode boundaries (resets).  Scene geometry is packed once at
construction into a padded (P, B, 6) tensor over the scene pool; each env
holds a materialized copy of its current scene's boxes so dynamic obstacles
can move without touching the pool.

Determinism: every reset draws from a generator seeded by
derive_seed(seed, env_index ^ (episode_counter << 16)), so trajectories are
reproducible regardless of which envs happen to reset together.
"""

from __future__ import annotations

import numpy as np

from ..config import Config
from ..errors import ContractViolation, SceneGenerationError
from ..geom import boxes_corners
from ..robot import CAM_PAN, CAM_TILT, EXTENSION, GRIPPER, LIFT, RobotModel
from ..seeding import derive_seed
from .scenes import SceneSpec

# padding rows live far away so they never collide and are never visible
_FAR = 1.0e6

# done_reason codes
DONE_NONE = 0
DONE_GOAL = 1
DONE_COLLISION = 2
DONE_TIMEOUT = 3
DONE_LIFTED = 4
DONE_NAMES = {DONE_NONE: "none", DONE_GOAL: "GoalReached", DONE_COLLISION: "Collision",
              DONE_TIMEOUT: "Timeout", DONE_LIFTED: "Lifted"}

TASK_NAV = "nav"
TASK_PICK = "pick"


def _pack_pool(scenes: list[SceneSpec]):
    counts = [scene.solid_boxes().shape[0] for scene in scenes]
    bmax = max(counts) if counts else 1
    pool = np.full((len(scenes), bmax, 6), _FAR, dtype=np.float64)
    pool[:, :, 3:] = _FAR + 1.0
    vels = np.zeros((len(scenes), bmax, 2))
    for p, scene in enumerate(scenes):
        solid = scene.solid_boxes()
        pool[p, : solid.shape[0]] = solid
        nw = len(scene.walls)
        for j, ob in enumerate(scene.obstacles):
            if ob.velocity is not None:
                vels[p, nw + j] = ob.velocity
    return pool, np.array(counts), vels


class VecEnv:
    """N parallel episodes over a pool of scenes.

    ``step`` takes physical commands (N, 10): [v, omega, 8 joint targets].
    With ``auto_reset`` (training) a terminated env is reset in place and the
    returned arrays describe the transition that ended the old episode; with
    ``auto_reset=False`` (evaluation) done envs freeze and further commands
    to them are ignored.
    """

    def __init__(self, scenes: list[SceneSpec], task: str = TASK_NAV, *,
                 num_envs: int | None = None, config: Config | None = None,
                 seed: int = 0, auto_reset: bool = True):
        if not scenes:
            raise ValueError("scene pool must not be empty")
        self.cfg = config or Config()
        self.task = task
        self.model = RobotModel(self.cfg.robot)
        self.n = num_envs if num_envs is not None else len(scenes)
        self.seed = int(seed)
        self.auto_reset = auto_reset
        self.rew = self.cfg.reward.resolved()
        self.ep = self.cfg.episode

        self.pool, self.pool_counts, self.pool_vels = _pack_pool(scenes)
        self.scenes = list(scenes)
        p = len(scenes)
        self.has_movers = bool(np.any(self.pool_vels != 0.0))

        if task == TASK_PICK:
            for scene in scenes:
                if scene.object is None or scene.table is None:
                    raise ValueError("pick task needs scenes with a table and object")

        b = self.pool.shape[1]
        n = self.n
        self.scene_idx = np.zeros(n, dtype=np.int64)
        self.solid = np.empty((n, b, 6))
        self.solid_counts = np.zeros(n, dtype=np.int64)
        self.solid_vel = np.zeros((n, b, 2))
        self.base = np.zeros((n, 3))
        self.base_vels = np.zeros((n, 2))
        self.joints = np.zeros((n, 8))
        self.joint_vels = np.zeros((n, 8))
        self.t = np.zeros(n, dtype=np.int64)
        self.done = np.zeros(n, dtype=bool)
        self.done_reason = np.zeros(n, dtype=np.int8)
        self.goal = np.zeros((n, 3))
        self.episode_count = np.zeros(n, dtype=np.int64)
        # pick bookkeeping
        self.obj_pos = np.zeros((n, 3))
        self.obj_init = np.zeros((n, 3))
        self.obj_size = np.zeros((n, 3))
        self.grasp_width = np.zeros(n)
        self.table_top = np.zeros(n)
        self.grasped = np.zeros(n, dtype=bool)
        self.contact_force = np.zeros(n)
        self._returns = np.zeros(n)
        self._rboxes = np.zeros((n, 4, 6))

        self.reset_all()

    # -- resets -----------------------------------------------------------

    def _reset_env(self, i: int):
        rng = np.random.default_rng(np.random.PCG64(
            derive_seed(self.seed, i ^ (int(self.episode_count[i]) << 16))))
        p = (i + int(self.episode_count[i]) * self.n) % len(self.scenes)
        self.scene_idx[i] = p
        self.solid[i] = self.pool[p]
        self.solid_counts[i] = self.pool_counts[p]
        self.solid_vel[i] = self.pool_vels[p]
        scene = self.scenes[p]
        self.goal[i] = scene.goal
        if self.task == TASK_PICK:
            self.obj_pos[i] = scene.object.initial_position
            self.obj_init[i] = scene.object.initial_position
            self.obj_size[i] = scene.object.size
            self.grasp_width[i] = scene.object.grasp_width
            self.table_top[i] = scene.table.hi[2]
            self.grasped[i] = False
            self.contact_force[i] = 0.0

        m = self.model
        for _ in range(100):
            joints = np.zeros(8)
            joints[LIFT] = rng.uniform(0.3, 0.9)
            joints[EXTENSION] = rng.uniform(0.0, 0.2)
            joints[GRIPPER] = m.joint_hi[GRIPPER]
            joints[CAM_PAN] = 0.0
            joints[CAM_TILT] = self.ep.reset_tilt
            theta = rng.uniform(-self.ep.heading_jitter, self.ep.heading_jitter)
            base = np.array([0.0, 0.0, theta])
            rbox = m.collision_boxes_arrays(base[None, :], joints[None, :])[0]
            hit = np.any(
                np.all(rbox[:, None, 0:3] <= self.solid[i][None, :, 3:6], axis=-1)
                & np.all(self.solid[i][None, :, 0:3] <= rbox[:, None, 3:6], axis=-1))
            if not hit:
                break
        else:
            raise SceneGenerationError(f"could not place robot in scene {p} in 100 tries")
        self.base[i] = base
        self.joints[i] = joints
        self._rboxes[i] = rbox
        self.joint_vels[i] = 0.0
        self.base_vels[i] = 0.0
        self.t[i] = 0
        self.done[i] = False
        self.done_reason[i] = DONE_NONE
        self.episode_count[i] += 1
        self._returns[i] = 0.0

    def reset_all(self):
        for i in range(self.n):
            self._reset_env(i)

    # -- stepping -----------------------------------------------------------

    def step(self, commands: np.ndarray):
        """Advance every live env by one control period.

        Returns (rewards (N,), dones (N,), info) where info carries
        'done_reason' (N,) int8, 'goal_dist' (N,), 'returns' of finished
        episodes and 'time_out' flags for bootstrapping.
        """
        commands = np.asarray(commands, dtype=np.float64)
        if commands.shape != (self.n, 10):
            raise ValueError(f"commands must be ({self.n}, 10)")
        live = ~self.done
        dt = self.ep.dt

        prev_base = self.base.copy()
        nb, nj, bv, jv = self.model.step_arrays(self.base, self.joints, commands, dt)
        self.base[live] = nb[live]
        self.joints[live] = nj[live]
        self.base_vels[live] = bv[live]
        self.joint_vels[live] = jv[live]
        self.t[live] += 1

        if self.has_movers:
            self._advance_movers(dt)

        # grasp state machine before rewards: attach/release, track gripper
        if self.task == TASK_PICK:
            self._update_grasp(live)

        rewards = self._rewards(live)
        self._returns[live] += rewards[live]

        # termination: collision first (conservative), then success, timeout
        collided = self._collisions() & live
        reason = np.zeros(self.n, dtype=np.int8)
        reason[collided] = DONE_COLLISION
        if self.task == TASK_NAV:
            gd = np.linalg.norm(self.base[:, 0:2] - self.goal[:, 0:2], axis=1)
            succeeded = (gd <= self.ep.goal_radius) & live & (reason == 0)
            reason[succeeded] = DONE_GOAL
        else:
            lifted = (self.grasped
                      & (self.obj_pos[:, 2] >= self.table_top + self.ep.lifted_margin)
                      & live & (reason == 0))
            reason[lifted] = DONE_LIFTED
        timed = (self.t >= self.ep.timeout_steps) & live & (reason == 0)
        reason[timed] = DONE_TIMEOUT

        newly_done = reason != DONE_NONE
        self.done |= newly_done
        self.done_reason[newly_done] = reason[newly_done]

        info = {
            "done_reason": self.done_reason.copy(),
            "goal_dist": np.linalg.norm(self.base[:, 0:2] - self.goal[:, 0:2], axis=1),
            "time_out": reason == DONE_TIMEOUT,
            "episode_return": np.where(newly_done, self._returns, np.nan),
            "steps": self.t.copy(),
        }
        dones = newly_done.copy()
        if self.auto_reset:
            for i in np.nonzero(newly_done)[0]:
                self._reset_env(int(i))
        return rewards, dones, info

    def _advance_movers(self, dt: float):
        vel = self.solid_vel
        moving = np.any(vel != 0.0, axis=2)
        if not np.any(moving):
            return
        self.solid[:, :, 0] += vel[:, :, 0] * dt
        self.solid[:, :, 3] += vel[:, :, 0] * dt
        self.solid[:, :, 1] += vel[:, :, 1] * dt
        self.solid[:, :, 4] += vel[:, :, 1] * dt
        # reflect off the corridor interior
        for i in range(self.n):
            scene = self.scenes[self.scene_idx[i]]
            hw = 0.5 * scene.corridor_width - 0.02
            for j in np.nonzero(moving[i])[0]:
                if self.solid[i, j, 1] < -hw and vel[i, j, 1] < 0:
                    vel[i, j, 1] = -vel[i, j, 1]
                if self.solid[i, j, 4] > hw and vel[i, j, 1] > 0:
                    vel[i, j, 1] = -vel[i, j, 1]
                if self.solid[i, j, 0] < 0.6 and vel[i, j, 0] < 0:
                    vel[i, j, 0] = -vel[i, j, 0]
                if self.solid[i, j, 3] > scene.goal[0] - 0.3 and vel[i, j, 0] > 0:
                    vel[i, j, 0] = -vel[i, j, 0]

    def _update_grasp(self, live: np.ndarray):
        grip_pos = self.model.gripper_pos_arrays(self.base, self.joints)
        aperture = self.joints[:, GRIPPER]
        # release when the gripper opens past the object width
        release = self.grasped & (aperture >= self.grasp_width) & live
        self.grasped[release] = False
        # track while held
        held = self.grasped & live
        self.obj_pos[held] = grip_pos[held]
        # attach on close contact
        dist = np.linalg.norm(self.obj_pos - grip_pos, axis=1)
        attach = (~self.grasped & (aperture < self.grasp_width)
                  & (dist < self.rew.grasp_dist) & live)
        self.grasped[attach] = True
        self.obj_pos[attach] = grip_pos[attach]
        self.contact_force = np.where(self.grasped, self.rew.contact_force, 0.0)

    # -- rewards --------------------------------------------------------------

    def _rewards(self, live: np.ndarray) -> np.ndarray:
        r = self.rew
        vel_pen = r.joint_vel_penalty * np.sum(np.abs(self.joint_vels), axis=1)
        if self.task == TASK_NAV:
            g = self.goal[:, 0:2] - self.base[:, 0:2]
            dist = np.linalg.norm(g, axis=1)
            heading = np.stack([np.cos(self.base[:, 2]), np.sin(self.base[:, 2])], axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                ghat = np.where(dist[:, None] > 1e-9, g / np.maximum(dist, 1e-9)[:, None], 0.0)
            v_g = self.base_vels[:, 0] * np.sum(heading * ghat, axis=1)
            out = r.nav_dist_scale * (-dist) + r.nav_progress_scale * v_g + vel_pen
        else:
            grip_pos = self.model.gripper_pos_arrays(self.base, self.joints)
            reach = -np.linalg.norm(self.obj_pos - grip_pos, axis=1)
            contact = (self.contact_force > r.contact_threshold).astype(np.float64)
            resid = np.maximum(self.table_top + r.lift_height - self.obj_pos[:, 2], 0.0)
            r_lift = (1.0 - np.tanh(r.lift_sharpness * resid)) * contact
            out = (r.pick_reach_scale * reach + r.pick_grasp_scale * contact
                   + r.pick_lift_scale * r_lift + vel_pen)
        return np.where(live, out, 0.0)

    # -- collision ---------------------------------------------------------------

    # extra inflation on the swept hull: covers unicycle arc sagitta and
    # mid-step rotation of the part AABBs (both < 3 mm per control period)
    SWEEP_MARGIN = 0.005

    def _collisions(self) -> np.ndarray:
        """Swept check: the union AABB of each part's previous and current
        box, slightly inflated, against every solid box.  Conservative, so a
        fine-timestep re-simulation can never reveal a missed contact."""
        rboxes = self.model.collision_boxes_arrays(self.base, self.joints)  # (N, 4, 6)
        swept_lo = np.minimum(rboxes[:, :, 0:3], self._rboxes[:, :, 0:3]) - self.SWEEP_MARGIN
        swept_hi = np.maximum(rboxes[:, :, 3:6], self._rboxes[:, :, 3:6]) + self.SWEEP_MARGIN
        self._rboxes = rboxes
        a_lo, a_hi = swept_lo[:, :, None, :], swept_hi[:, :, None, :]
        b_lo, b_hi = self.solid[:, None, :, 0:3], self.solid[:, None, :, 3:6]
        overlap = np.all(a_lo <= b_hi, axis=-1) & np.all(b_lo <= a_hi, axis=-1)
        return np.any(overlap, axis=(1, 2))

    # -- observation pieces -----------------------------------------------------

    def proprio(self) -> np.ndarray:
        """(N, 21): normalized joints (8) + normalized joint vels (8) +
        normalized base vels (2) + gripper position in the base frame (3)."""
        m = self.model
        jn = (self.joints - m.joint_mid) / m.joint_half
        vn = self.joint_vels / m.joint_vel_max
        bv = self.base_vels / np.array([m.base_lin_vel_max, m.base_ang_vel_max])
        grip = self.model.gripper_pos_arrays(self.base, self.joints)
        rel = grip - np.concatenate([self.base[:, 0:2], np.zeros((self.n, 1))], axis=1)
        ct, st = np.cos(self.base[:, 2]), np.sin(self.base[:, 2])
        gx = ct * rel[:, 0] + st * rel[:, 1]
        gy = -st * rel[:, 0] + ct * rel[:, 1]
        return np.concatenate([jn, vn, bv, np.stack([gx, gy, rel[:, 2]], axis=1)], axis=1)

    def goal_in_base(self) -> np.ndarray:
        """(N, 3): goal position in the base frame (z kept as-is)."""
        rel = self.goal - np.concatenate([self.base[:, 0:2], np.zeros((self.n, 1))], axis=1)
        ct, st = np.cos(self.base[:, 2]), np.sin(self.base[:, 2])
        return np.stack([ct * rel[:, 0] + st * rel[:, 1],
                         -st * rel[:, 0] + ct * rel[:, 1], rel[:, 2]], axis=1)

    def solid_corners(self) -> np.ndarray:
        """(N, B, 8, 3) world-frame corners of every solid box (padding far away)."""
        return boxes_corners(self.solid)

    def camera_poses(self):
        """(pos (N, 3), world-from-camera rotations (N, 3, 3))."""
        return self.model.camera_pose_arrays(self.base, self.joints)

    def gripper_positions(self) -> np.ndarray:
        return self.model.gripper_pos_arrays(self.base, self.joints)

    def object_state(self):
        """(o_t world (N, 3), o_i world (N, 3), grasped (N,))."""
        return self.obj_pos.copy(), self.obj_init.copy(), self.grasped.copy()

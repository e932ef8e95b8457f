"""Single-episode API over the vectorized core.

``reset``/``step`` drive a one-env :class:`VecEnv` internally, so episode
semantics (integration, grasping, termination, rewards) are exactly the
training semantics.  ``reward_nav``/``reward_pick`` are the closed-form
reward definitions on explicit states; a test pins them to the vectorized
implementation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..config import Config
from ..errors import ContractViolation
from ..robot import GRIPPER, Action, RobotModel, RobotState, fk_gripper
from ..geom import Pose2
from . import vec_env
from .scenes import SceneSpec
from .vec_env import DONE_NAMES, VecEnv


class Task(enum.Enum):
    NAV = "nav"
    PICK = "pick"


class DoneReason(enum.Enum):
    GOAL_REACHED = "GoalReached"
    COLLISION = "Collision"
    TIMEOUT = "Timeout"
    LIFTED = "Lifted"


_REASON_FROM_CODE = {
    vec_env.DONE_GOAL: DoneReason.GOAL_REACHED,
    vec_env.DONE_COLLISION: DoneReason.COLLISION,
    vec_env.DONE_TIMEOUT: DoneReason.TIMEOUT,
    vec_env.DONE_LIFTED: DoneReason.LIFTED,
}


@dataclass(frozen=True)
class ContactProxy:
    force_sum: float

    def __post_init__(self):
        if self.force_sum < 0:
            raise ValueError("contact force must be nonnegative")


@dataclass(frozen=True)
class RawObs:
    """Raw per-step sensor inputs, before any policy-specific assembly."""

    proprio: np.ndarray          # (21,) normalized joint/vel state + gripper-in-base
    goal_in_base: np.ndarray     # (3,)
    solid_boxes: np.ndarray      # (B, 6) world boxes incl. walls/obstacles/table
    object_position: np.ndarray | None
    object_initial: np.ndarray | None
    grasped: bool


@dataclass(frozen=True)
class EpisodeState:
    robot: RobotState
    scene: SceneSpec
    t: int
    task: Task
    done: bool
    done_reason: DoneReason | None
    object_position: np.ndarray | None = None
    object_grasped: bool = False
    contact_force: float = 0.0
    _env: VecEnv | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.done != (self.done_reason is not None):
            raise ValueError("done_reason must be set exactly when done")


def _snapshot(env: VecEnv, scene: SceneSpec, task: Task) -> EpisodeState:
    rs = RobotState(
        base=Pose2(env.base[0, 0], env.base[0, 1], env.base[0, 2]),
        base_lin_vel=float(env.base_vels[0, 0]),
        base_ang_vel=float(env.base_vels[0, 1]),
        joints=env.joints[0].copy(),
        joint_vels=env.joint_vels[0].copy(),
    )
    done = bool(env.done[0])
    code = int(env.done_reason[0])
    return EpisodeState(
        robot=rs, scene=scene, t=int(env.t[0]), task=task, done=done,
        done_reason=_REASON_FROM_CODE[code] if done else None,
        object_position=env.obj_pos[0].copy() if task is Task.PICK else None,
        object_grasped=bool(env.grasped[0]) if task is Task.PICK else False,
        contact_force=float(env.contact_force[0]),
        _env=env)


def reset(scene: SceneSpec, task: Task, rng_seed: int,
          config: Config | None = None) -> EpisodeState:
    """Start one episode; initial joint/heading jitter comes from rng_seed."""
    env = VecEnv([scene], task=task.value, num_envs=1, config=config,
                 seed=int(rng_seed), auto_reset=False)
    return _snapshot(env, scene, task)


def step(e: EpisodeState, a: Action):
    """Advance one control period; returns (state', reward, RawObs)."""
    if e.done:
        raise ContractViolation("step() called on a finished episode")
    env = e._env
    if env is None:
        raise ContractViolation("EpisodeState was not produced by reset()")
    rewards, _, _ = env.step(a.as_commands()[None, :])
    nxt = _snapshot(env, e.scene, e.task)
    obs = RawObs(
        proprio=env.proprio()[0],
        goal_in_base=env.goal_in_base()[0],
        solid_boxes=env.solid[0].copy(),
        object_position=env.obj_pos[0].copy() if e.task is Task.PICK else None,
        object_initial=env.obj_init[0].copy() if e.task is Task.PICK else None,
        grasped=bool(env.grasped[0]) if e.task is Task.PICK else False,
    )
    return nxt, float(rewards[0]), obs


def reward_nav(e_prev: EpisodeState, e_next: EpisodeState,
               config: Config | None = None) -> float:
    """Distance penalty + signed progress toward goal + joint-velocity penalty."""
    rew = (config or Config()).reward.resolved()
    s = e_next.robot
    g = e_next.scene.goal[0:2] - np.array([s.base.x, s.base.y])
    dist = float(np.linalg.norm(g))
    if dist > 1e-9:
        heading = np.array([math.cos(s.base.theta), math.sin(s.base.theta)])
        v_g = s.base_lin_vel * float(heading @ (g / dist))
    else:
        v_g = 0.0
    pen = rew.joint_vel_penalty * float(np.sum(np.abs(s.joint_vels)))
    return rew.nav_dist_scale * (-dist) + rew.nav_progress_scale * v_g + pen


def reward_pick(e_prev: EpisodeState, e_next: EpisodeState,
                config: Config | None = None) -> float:
    """Reach + grasp indicator + gated lift shaping + joint-velocity penalty."""
    cfg = config or Config()
    rew = cfg.reward.resolved()
    model = RobotModel(cfg.robot)
    p = fk_gripper(model, e_next.robot)
    o = e_next.object_position
    contact = 1.0 if e_next.contact_force > rew.contact_threshold else 0.0
    table_top = e_next.scene.table.hi[2]
    resid = max(table_top + rew.lift_height - float(o[2]), 0.0)
    r_lift = (1.0 - math.tanh(rew.lift_sharpness * resid)) * contact
    pen = rew.joint_vel_penalty * float(np.sum(np.abs(e_next.robot.joint_vels)))
    return (rew.pick_reach_scale * (-float(np.linalg.norm(o - p)))
            + rew.pick_grasp_scale * contact + rew.pick_lift_scale * r_lift + pen)


def contact_proxy(e: EpisodeState, config: Config | None = None) -> ContactProxy:
    """Kinematic stand-in for force sensing: fixed force while grasping."""
    cfg = config or Config()
    rew = cfg.reward.resolved()
    if e.object_grasped:
        return ContactProxy(rew.contact_force)
    model = RobotModel(cfg.robot)
    p = fk_gripper(model, e.robot)
    aperture = float(e.robot.joints[GRIPPER])
    width = e.scene.object.grasp_width
    dist = float(np.linalg.norm(e.object_position - p))
    hit = aperture < width and dist < rew.grasp_dist
    return ContactProxy(rew.contact_force if hit else 0.0)

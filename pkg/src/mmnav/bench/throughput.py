"""Wall-clock probe comparing scandot and depth-render observation cost.

The point-sample geometry pipeline is what makes phase-1 training cheap;
this measures the actual env-steps-per-second gap against rendering a
58x87 depth image per env per step on the same scenes.
"""

from __future__ import annotations

import time

import numpy as np

from ..config import Config
from ..policy import make_obs_builder
from ..seeding import derive_seed
from ..world import Difficulty, Scenario, VecEnv, generate_scene


def _step_loop(env, obs, steps: int) -> float:
    """Time obs building + stepping; returns env-steps per second."""
    cmds = np.zeros((env.n, 10))
    cmds[:, 0] = 0.1
    cmds[:, 2:10] = env.joints
    # one warm pass outside the clock (allocations, caches)
    obs()
    env.step(cmds)
    t0 = time.perf_counter()
    for _ in range(steps):
        obs()
        cmds[:, 2:10] = env.joints
        env.step(cmds)
    dt = time.perf_counter() - t0
    return env.n * steps / dt


def make_probe_scenes(seed: int = 0, count: int = 8,
                      difficulty: Difficulty = Difficulty.MEDIUM):
    return [generate_scene(difficulty, Scenario.STRAIGHT_CORRIDOR,
                           derive_seed(seed, 0x7B, k)) for k in range(count)]


def throughput_probe(num_envs: int = 256, *, scenes=None,
                     config: Config | None = None, seed: int = 0,
                     scandot_steps: int = 120, depth_steps: int = 8) -> dict:
    """Returns {scandot_env_sps, depth_env_sps, ratio, num_envs}.

    Depth gets far fewer timed steps because a single depth step costs
    orders of magnitude more; both loops run identical commands."""
    cfg = config or Config()
    scenes = scenes if scenes is not None else make_probe_scenes(seed)

    env_s = VecEnv(scenes, task="nav", num_envs=num_envs, config=cfg,
                   seed=seed, auto_reset=True)
    obs_s = make_obs_builder("scandots_masked", env_s, seed=seed)
    scandot_sps = _step_loop(env_s, obs_s, scandot_steps)

    env_d = VecEnv(scenes, task="nav", num_envs=num_envs, config=cfg,
                   seed=seed, auto_reset=True)
    obs_d = make_obs_builder("depth", env_d, seed=seed, ideal=True)
    depth_sps = _step_loop(env_d, obs_d, depth_steps)

    return {"scandot_env_sps": float(scandot_sps),
            "depth_env_sps": float(depth_sps),
            "ratio": float(scandot_sps / depth_sps),
            "num_envs": int(num_envs)}

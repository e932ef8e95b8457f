"""Benchmark harness: six-cell navigation suite, pick and place composites,
dynamic-obstacle trials, CSV/text tables, trajectory logs and an independent
replay checker.

Episodes of a cell run in parallel inside one vectorized env; the main
thread is the single writer that reduces them into result rows.  Every run
can emit a line-delimited trajectory log carrying enough metadata to rebuild
the scenes from seeds, so a separate checker can re-simulate the logged
commands and recompute terminations without trusting the runner.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass

import numpy as np
import torch

from ..baselines import classical_episode, fixcam_action_transform
from ..config import Config
from ..errors import ConfigError, ContractViolation
from ..geom import Box3, wrap_angle
from ..perception import CameraIntrinsics
from ..policy import load_policy, make_obs_builder
from ..robot import EXTENSION, GRIPPER, LIFT
from ..seeding import derive_seed
from ..world import Difficulty, Obstacle, ObstacleKind, Scenario, SceneSpec, VecEnv
from ..world import generate_pick_scene, generate_scene
from ..world.scenes import OBJECT_SIZES, ObjectKind, ObjectSpec, SceneConfig
from ..world.vec_env import DONE_COLLISION, DONE_GOAL, DONE_LIFTED

SCENARIOS = (Scenario.STRAIGHT_CORRIDOR, Scenario.L_CORRIDOR)
DIFFICULTIES = (Difficulty.EASY, Difficulty.MEDIUM, Difficulty.HARD)

TASK_REACH = "reach"
TASK_PICK = "pick"
TASK_PLACE = "place"

CSV_COLUMNS = ("method", "task", "scenario", "difficulty", "seed", "episode",
               "success", "duration_s", "collisions")

PLACE_RADIUS = 0.15          # object-to-marker distance that counts as placed


@dataclass(frozen=True)
class BenchmarkSuite:
    """The full evaluation grid: 2 scenarios x 3 difficulties, 10 episodes
    per cell, repeated over 3 seeds.  Pick runs on a dedicated table scene
    and has no scenario/difficulty split."""

    episodes_per_cell: int = 10
    seeds: tuple[int, ...] = (0, 1, 2)
    tasks: tuple[str, ...] = (TASK_REACH, TASK_PICK, TASK_PLACE)

    def cells(self):
        return [(s, d) for s in SCENARIOS for d in DIFFICULTIES]

    def __post_init__(self):
        if self.episodes_per_cell < 1:
            raise ConfigError("episodes_per_cell must be positive")
        for t in self.tasks:
            if t not in (TASK_REACH, TASK_PICK, TASK_PLACE):
                raise ConfigError(f"unknown benchmark task {t!r}")


@dataclass
class EpisodeResult:
    method: str
    task: str
    scenario: str
    difficulty: str
    seed: int
    episode_id: int
    success: bool
    duration_s: float
    collisions: int
    min_clearance: float

    def csv_row(self) -> str:
        return ",".join([
            self.method, self.task, self.scenario, self.difficulty,
            str(self.seed), str(self.episode_id), str(int(self.success)),
            "%.1f" % self.duration_s, str(self.collisions)])


# ---------------------------------------------------------------------------
# policy drivers
# ---------------------------------------------------------------------------

class PolicyDriver:
    """A checkpoint plus the recipe to evaluate it greedily on an env."""

    def __init__(self, path):
        if not os.path.exists(str(path)):
            raise ConfigError(f"checkpoint not found: {path}")
        self.path = str(path)
        self.model, self.meta = load_policy(self.path)

    def bind(self, env, seed: int = 0) -> "BoundPolicy":
        kind = self.meta["obs_kind"]
        kw = {}
        if kind in ("scandots_full", "scandots_masked"):
            kw["max_range"] = self.meta.get("max_range")
        elif kind == "slots":
            kw["slots"] = int(self.meta.get("slots", 8))
        elif kind == "depth":
            h, w = self.meta.get("depth_hw", [58, 87])
            kw["intr"] = CameraIntrinsics(height=int(h), width=int(w))
        obs = make_obs_builder(kind, env, seed=seed, **kw)
        tf = None
        if self.meta.get("fix_pose"):
            tf = fixcam_action_transform(env.model, tuple(self.meta["fix_pose"]))
        return BoundPolicy(self.model, obs, env, tf)


class BoundPolicy:
    def __init__(self, model, obs_builder, env, action_transform=None):
        self.model = model.eval()
        self.obs = obs_builder
        self.env = env
        self.tf = action_transform
        self.hidden = model.initial_hidden(env.n)

    @torch.no_grad()
    def commands(self) -> np.ndarray:
        pro, perc, task = self.obs()
        if isinstance(perc, tuple):
            tperc = tuple(torch.from_numpy(p) for p in perc)
        else:
            tperc = torch.from_numpy(perc)
        mean, _, _, self.hidden = self.model.step(
            torch.from_numpy(pro), tperc, torch.from_numpy(task), self.hidden)
        a = mean.numpy().astype(np.float64)
        if self.tf is not None:
            a = self.tf(a)
        return self.env.model.commands_from_normalized(a)


# ---------------------------------------------------------------------------
# clearance and trajectory logging
# ---------------------------------------------------------------------------

def min_clearances(env) -> np.ndarray:
    """(N,) smallest separation between any robot box and any solid."""
    rb = env.model.collision_boxes_arrays(env.base, env.joints)   # (N, 4, 6)
    sb = env.solid                                                # (N, B, 6)
    gap = np.maximum(sb[:, None, :, 0:3] - rb[:, :, None, 3:6],
                     rb[:, :, None, 0:3] - sb[:, None, :, 3:6])
    gap = np.maximum(gap, 0.0)
    d = np.sqrt((gap ** 2).sum(axis=3))                           # (N, 4, B)
    valid = np.arange(sb.shape[1])[None, :] < env.solid_counts[:, None]
    d = np.where(valid[:, None, :], d, np.inf)
    return d.min(axis=(1, 2))


class TrajectoryLog:
    """One JSON record per line: headers describe how to rebuild each env,
    step records carry exact (repr round-trip) state and commands."""

    def __init__(self, path):
        self.path = str(path)
        self._f = open(self.path, "w")

    def header(self, **kw):
        self._f.write(json.dumps({"type": "header", **kw}) + "\n")

    def step(self, env_idx: int, t: int, base, joints, action, reward,
             done: bool, reason: int):
        self._f.write(json.dumps({
            "type": "step", "env": int(env_idx), "t": int(t),
            "base": [float(v) for v in base],
            "joints": [float(v) for v in joints],
            "action": [float(v) for v in action],
            "reward": float(reward), "done": bool(done),
            "reason": int(reason)}) + "\n")

    def close(self):
        self._f.close()


def _log_step(log, env, live_before, cmds, rewards, info):
    if log is None:
        return
    for i in np.flatnonzero(live_before):
        log.step(i, int(env.t[i]), env.base[i], env.joints[i], cmds[i],
                 rewards[i], bool(env.done[i]), int(env.done_reason[i]))


# ---------------------------------------------------------------------------
# scene builders
# ---------------------------------------------------------------------------

def crossing_scene(scene_seed: int, *, speed: float | None = None) -> SceneSpec:
    """Easy ground-only straight corridor plus one box shuttling across the
    route; speed 0 degenerates to a static obstacle."""
    base = generate_scene(Difficulty.EASY, Scenario.STRAIGHT_CORRIDOR,
                          derive_seed(scene_seed, 0xDC0),
                          SceneConfig(floating_fraction=0.0))
    rng = np.random.default_rng(derive_seed(scene_seed, 0xC805))
    hw = 0.5 * base.corridor_width
    size = rng.uniform(0.25, 0.4)
    x = float(rng.uniform(0.35, 0.65) * base.goal[0])
    side = 1.0 if rng.random() < 0.5 else -1.0
    y = side * (hw - 0.5 * size - 0.06)
    sp = float(rng.uniform(0.3, 0.5)) if speed is None else float(speed)
    height = float(rng.uniform(0.5, 0.8))
    mover = Obstacle(
        Box3([x - 0.5 * size, y - 0.5 * size, 0.0],
             [x + 0.5 * size, y + 0.5 * size, height]),
        ObstacleKind.GROUND,
        velocity=None if sp == 0.0 else (0.0, -side * sp))
    return dataclasses.replace(base, obstacles=base.obstacles + (mover,))


def make_place_scene(difficulty: Difficulty, scenario: Scenario,
                     scene_seed: int,
                     max_attempts: int = 20) -> tuple[SceneSpec, float]:
    """Corridor scene with a table and object at the far end; returns the
    scene plus the grasp heading.

    The table hugs the wall that ends up on the robot's -y side when it
    faces along the final leg (the side approach the pick policy was
    trained with); the nav goal becomes the staging point beside it.  The
    1 m straight corridor forces a shallow table so the staging pose keeps
    wall clearance; the 1.5 m L corridor fits a full-depth one."""
    for attempt in range(max_attempts):
        seed = derive_seed(scene_seed, 0x9A * (attempt + 1))
        scene = generate_scene(difficulty, scenario, seed)
        rng = np.random.default_rng(derive_seed(seed, 0x7AB1E))
        t_len = float(rng.uniform(0.8, 1.1))
        t_h = float(rng.uniform(0.7, 0.8))
        hw = 0.5 * scene.corridor_width
        gx, gy = float(scene.goal[0]), float(scene.goal[1])
        if scenario == Scenario.STRAIGHT_CORRIDOR:
            # final leg along +x: the base's -y side faces the -y wall
            t_depth = float(rng.uniform(0.22, 0.28))
            lo = [gx - 0.5 * t_len, -hw + 0.02, 0.0]
            hi = [gx + 0.5 * t_len, -hw + 0.02 + t_depth, t_h]
            heading = 0.0
            staging = np.array([gx, hi[1] + 0.45, 0.0])
        else:
            # final leg along +y: the base's -y side faces the +x wall
            t_depth = float(rng.uniform(0.35, 0.45))
            lo = [gx + hw - 0.02 - t_depth, gy - 0.5 * t_len, 0.0]
            hi = [gx + hw - 0.02, gy + 0.5 * t_len, t_h]
            heading = 0.5 * math.pi
            staging = np.array([lo[0] - 0.45, gy, 0.0])
        table = Box3(np.array(lo), np.array(hi))
        clear = all(not _boxes_overlap(table, o.box) for o in scene.obstacles)
        if not clear:
            continue
        kind = list(ObjectKind)[int(rng.integers(0, len(ObjectKind)))]
        sx, sy, sz = OBJECT_SIZES[kind]
        along = float(rng.uniform(-0.25, 0.25))
        # object near the robot-side table edge, like the pick training room
        if scenario == Scenario.STRAIGHT_CORRIDOR:
            pos = np.array([gx + along, hi[1] - 0.15, t_h + 0.5 * sz])
        else:
            pos = np.array([hi[0] - 0.15, gy + along, t_h + 0.5 * sz])
        obj = ObjectSpec(kind=kind,
                         box=Box3(pos - [0.5 * sx, 0.5 * sy, 0.5 * sz],
                                  pos + [0.5 * sx, 0.5 * sy, 0.5 * sz]),
                         position=pos, initial_position=pos)
        return dataclasses.replace(scene, goal=staging, table=table,
                                   object=obj), heading
    raise ContractViolation(
        f"could not place a table in {scenario.value}/{difficulty.value} "
        f"scene {scene_seed} after {max_attempts} attempts")


def _boxes_overlap(a: Box3, b: Box3) -> bool:
    return bool(np.all(a.lo < b.hi) and np.all(b.lo < a.hi))


def _rebuild_scenes(head: dict):
    kind = head["kind"]
    if kind == "nav":
        return generate_scene(Difficulty(head["difficulty"]),
                              Scenario(head["scenario"]), head["scene_seed"])
    if kind == "pick":
        return generate_pick_scene(head["scene_seed"])
    if kind == "place":
        scene, _ = make_place_scene(Difficulty(head["difficulty"]),
                                    Scenario(head["scenario"]),
                                    head["scene_seed"])
        return scene
    if kind == "dynamic":
        return crossing_scene(head["scene_seed"], speed=head.get("speed"))
    raise ContractViolation(f"unknown log scene kind {kind!r}")


# ---------------------------------------------------------------------------
# cell runners
# ---------------------------------------------------------------------------

def _hold_commands(env, idx, v=0.0, w=0.0):
    c = np.empty(10)
    c[0], c[1] = v, w
    c[2:10] = env.joints[idx]
    return c


def _run_to_completion(env, bound, *, log=None, max_steps=None):
    """Step greedy policy until every env terminates; returns min clearance."""
    minc = np.full(env.n, np.inf)
    limit = max_steps or env.ep.timeout_steps + 2
    for _ in range(limit):
        if env.done.all():
            break
        live_before = ~env.done
        cmds = bound.commands()
        rewards, _, info = env.step(cmds)
        minc = np.minimum(
            minc, np.where(live_before, min_clearances(env), np.inf))
        _log_step(log, env, live_before, cmds, rewards, info)
    return minc


def _results_from_env(env, minc, *, method, task, scenario, difficulty, seed,
                      episode_base, success_reason):
    dt = env.ep.dt
    out = []
    for i in range(env.n):
        reason = int(env.done_reason[i])
        out.append(EpisodeResult(
            method=method, task=task, scenario=scenario, difficulty=difficulty,
            seed=seed, episode_id=episode_base + i,
            success=reason == success_reason,
            duration_s=float(env.t[i]) * dt,
            collisions=int(reason == DONE_COLLISION),
            min_clearance=float(minc[i])))
    return out


def _nav_cell(method, driver, scenario, difficulty, seed, suite, cfg,
              log_dir=None):
    n = suite.episodes_per_cell
    seeds = [derive_seed(seed, 0xCE11, SCENARIOS.index(scenario),
                         DIFFICULTIES.index(difficulty), e) for e in range(n)]
    scenes = [generate_scene(difficulty, scenario, s) for s in seeds]
    env_seed = derive_seed(seed, 0xE2B)
    env = VecEnv(scenes, task="nav", num_envs=n, config=cfg, seed=env_seed,
                 auto_reset=False)
    log = _open_log(log_dir, method, TASK_REACH, scenario, difficulty, seed)
    if log is not None:
        for i, s in enumerate(seeds):
            log.header(env=i, kind="nav", task="nav",
                       scenario=scenario.value, difficulty=difficulty.value,
                       scene_seed=s, env_seed=env_seed,
                       timeout_steps=cfg.episode.timeout_steps)
    bound = driver.bind(env, seed=derive_seed(seed, 0x0B5))
    minc = _run_to_completion(env, bound, log=log)
    if log is not None:
        log.close()
    return _results_from_env(
        env, minc, method=method, task=TASK_REACH, scenario=scenario.value,
        difficulty=difficulty.value, seed=seed, episode_base=0,
        success_reason=DONE_GOAL)


def _classical_cell(method, scenario, difficulty, seed, suite, cfg):
    n = suite.episodes_per_cell
    out = []
    for e in range(n):
        s = derive_seed(seed, 0xCE11, SCENARIOS.index(scenario),
                        DIFFICULTIES.index(difficulty), e)
        scene = generate_scene(difficulty, scenario, s)
        r = classical_episode(scene, cfg, seed=derive_seed(seed, 0xC1, e))
        out.append(EpisodeResult(
            method=method, task=TASK_REACH, scenario=scenario.value,
            difficulty=difficulty.value, seed=seed, episode_id=e,
            success=bool(r["success"]),
            duration_s=r["steps"] * cfg.episode.dt,
            collisions=int(r["done_reason"] == DONE_COLLISION),
            min_clearance=float("nan")))
    return out


def _pick_cell(method, driver, seed, suite, cfg, log_dir=None):
    n = suite.episodes_per_cell
    seeds = [derive_seed(seed, 0x91C2, e) for e in range(n)]
    scenes = [generate_pick_scene(s) for s in seeds]
    env_seed = derive_seed(seed, 0xE2B)
    env = VecEnv(scenes, task="pick", num_envs=n, config=cfg, seed=env_seed,
                 auto_reset=False)
    log = _open_log(log_dir, method, TASK_PICK, None, None, seed)
    if log is not None:
        for i, s in enumerate(seeds):
            log.header(env=i, kind="pick", task="pick", scene_seed=s,
                       env_seed=env_seed,
                       timeout_steps=cfg.episode.timeout_steps)
    bound = driver.bind(env, seed=derive_seed(seed, 0x0B6))
    minc = _run_to_completion(env, bound, log=log)
    if log is not None:
        log.close()
    return _results_from_env(
        env, minc, method=method, task=TASK_PICK, scenario="PickRoom",
        difficulty="-", seed=seed, episode_base=0,
        success_reason=DONE_LIFTED)


# place composite phases
_GO, _ALIGN, _PICKUP, _RETRACT, _RETURN, _CENTER = range(6)


def _place_cell(method, nav_driver, pick_driver, scenario, difficulty, seed,
                suite, cfg, log_dir=None):
    n = suite.episodes_per_cell
    seeds = [derive_seed(seed, 0x91AC, SCENARIOS.index(scenario),
                         DIFFICULTIES.index(difficulty), e) for e in range(n)]
    built = [make_place_scene(difficulty, scenario, s) for s in seeds]
    scenes = [b[0] for b in built]
    headings = np.array([b[1] for b in built])
    pcfg = dataclasses.replace(cfg, episode=dataclasses.replace(
        cfg.episode, timeout_steps=cfg.episode.place_timeout_steps))
    env_seed = derive_seed(seed, 0xE2B)
    env = VecEnv(scenes, task="pick", num_envs=n, config=pcfg, seed=env_seed,
                 auto_reset=False)
    log = _open_log(log_dir, method, TASK_PLACE, scenario, difficulty, seed)
    marker = env.base[:, 0:2].copy()
    if log is not None:
        for i, s in enumerate(seeds):
            log.header(env=i, kind="place", task="pick",
                       scenario=scenario.value, difficulty=difficulty.value,
                       scene_seed=s, env_seed=env_seed,
                       timeout_steps=pcfg.episode.timeout_steps,
                       marker=[float(v) for v in marker[i]])
    nav = nav_driver.bind(env, seed=derive_seed(seed, 0x0B5))
    pick = pick_driver.bind(env, seed=derive_seed(seed, 0x0B6))
    staging = np.array([s.goal[0:2] for s in scenes])
    phase = np.zeros(n, dtype=int)
    placed = np.zeros(n, dtype=bool)
    minc = np.full(n, np.inf)
    for _ in range(pcfg.episode.timeout_steps + 2):
        if env.done.all():
            break
        live_before = ~env.done
        nav_cmds = nav.commands()
        pick_cmds = pick.commands()
        cmds = nav_cmds.copy()
        m = env.model
        for i in range(n):
            if not live_before[i]:
                continue
            if phase[i] == _ALIGN:
                err = wrap_angle(headings[i] - env.base[i, 2])
                w = float(np.clip(2.0 * err, -m.base_ang_vel_max,
                                  m.base_ang_vel_max))
                cmds[i] = _hold_commands(env, i, v=0.0, w=w)
                # mimic the pick reset: arm stowed, gripper open
                cmds[i, 2 + EXTENSION] = m.joint_lo[EXTENSION]
                cmds[i, 2 + GRIPPER] = m.joint_hi[GRIPPER]
            elif phase[i] == _PICKUP:
                cmds[i] = pick_cmds[i]
            elif phase[i] == _RETRACT:
                cmds[i] = _hold_commands(env, i)
            elif phase[i] == _CENTER:
                e_vec = marker[i] - env.gripper_positions()[i, 0:2]
                bearing = wrap_angle(math.atan2(e_vec[1], e_vec[0])
                                     - env.base[i, 2])
                v = 0.0 if abs(bearing) > 0.4 else min(0.2, 0.5 * np.hypot(*e_vec))
                w = float(np.clip(2.0 * bearing, -m.base_ang_vel_max,
                                  m.base_ang_vel_max))
                cmds[i] = _hold_commands(env, i, v=v, w=w)
            if phase[i] >= _RETRACT:
                # carry configuration: grip the object, pull the arm in,
                # keep the lift where the pick policy left it
                cmds[i, 2 + GRIPPER] = m.joint_lo[GRIPPER]
                cmds[i, 2 + EXTENSION] = m.joint_lo[EXTENSION]
                cmds[i, 2 + LIFT] = env.joints[i, LIFT]
        rewards, _, info = env.step(cmds)
        minc = np.minimum(
            minc, np.where(live_before, min_clearances(env), np.inf))
        _log_step(log, env, live_before, cmds, rewards, info)
        # a lift mid-composite is a phase transition, not a termination
        lifted = env.done & (env.done_reason == DONE_LIFTED)
        env.done[lifted] = False
        env.done_reason[lifted] = 0
        live = ~env.done
        base = env.base
        d_staging = np.linalg.norm(base[:, 0:2] - staging, axis=1)
        adv = live & (phase == _GO) & (d_staging <= cfg.episode.goal_radius + 0.1)
        phase[adv] = _ALIGN
        err = np.array([abs(wrap_angle(headings[i] - base[i, 2]))
                        for i in range(n)])
        adv = live & (phase == _ALIGN) & (err < 0.06)
        phase[adv] = _PICKUP
        high = env.grasped & (env.obj_pos[:, 2]
                              >= env.table_top + env.ep.lifted_margin)
        adv = live & (phase == _PICKUP) & high
        phase[adv] = _RETRACT
        stowed = env.joints[:, EXTENSION] <= env.model.joint_lo[EXTENSION] + 0.03
        adv = live & (phase == _RETRACT) & stowed & env.grasped
        phase[adv] = _RETURN
        for i in np.flatnonzero(adv):
            env.goal[i, 0:2] = marker[i]
            env.goal[i, 2] = 0.0
        d_marker = np.linalg.norm(base[:, 0:2] - marker, axis=1)
        adv = live & (phase == _RETURN) & (d_marker <= cfg.episode.goal_radius + 0.1)
        phase[adv] = _CENTER
        obj_err = np.linalg.norm(env.obj_pos[:, 0:2] - marker, axis=1)
        done_ok = live & (phase == _CENTER) & env.grasped & (obj_err <= PLACE_RADIUS)
        placed |= done_ok
        env.done[done_ok] = True
    if log is not None:
        log.close()
    dt = env.ep.dt
    out = []
    for i in range(n):
        out.append(EpisodeResult(
            method=method, task=TASK_PLACE, scenario=scenario.value,
            difficulty=difficulty.value, seed=seed, episode_id=i,
            success=bool(placed[i]), duration_s=float(env.t[i]) * dt,
            collisions=int(env.done_reason[i] == DONE_COLLISION),
            min_clearance=float(minc[i])))
    return out


def _open_log(log_dir, method, task, scenario, difficulty, seed):
    if log_dir is None:
        return None
    os.makedirs(log_dir, exist_ok=True)
    parts = [method, task]
    if scenario is not None:
        parts += [scenario.value, difficulty.value]
    parts.append(f"s{seed}")
    return TrajectoryLog(os.path.join(log_dir, "_".join(parts) + ".jsonl"))


# ---------------------------------------------------------------------------
# suite and dynamic entry points
# ---------------------------------------------------------------------------

def run_suite(method: str, suite: BenchmarkSuite, policies: dict, *,
              config: Config | None = None, tasks=None, log_dir=None,
              progress=None) -> list[EpisodeResult]:
    """Evaluate one method over the grid.  policies maps task family to a
    checkpoint path: {"nav": ..., "pick": ...}; the classical pipeline needs
    none and only produces reach rows."""
    cfg = config or Config()
    tasks = tuple(tasks) if tasks is not None else suite.tasks
    classical = method == "classical"
    nav_driver = pick_driver = None
    if not classical:
        if any(t in tasks for t in (TASK_REACH, TASK_PLACE)):
            if "nav" not in policies:
                raise ConfigError(f"method {method!r} needs a nav checkpoint")
            nav_driver = PolicyDriver(policies["nav"])
        if any(t in tasks for t in (TASK_PICK, TASK_PLACE)):
            if "pick" not in policies:
                raise ConfigError(f"method {method!r} needs a pick checkpoint")
            pick_driver = PolicyDriver(policies["pick"])
    results = []
    for seed in suite.seeds:
        for task in tasks:
            if task == TASK_PICK:
                if classical:
                    continue
                results.extend(_pick_cell(method, pick_driver, seed, suite,
                                          cfg, log_dir))
                if progress:
                    progress(f"{method} pick seed {seed} done")
                continue
            for scenario, difficulty in suite.cells():
                if task == TASK_REACH:
                    if classical:
                        rows = _classical_cell(method, scenario, difficulty,
                                               seed, suite, cfg)
                    else:
                        rows = _nav_cell(method, nav_driver, scenario,
                                         difficulty, seed, suite, cfg, log_dir)
                else:
                    if classical:
                        continue
                    rows = _place_cell(method, nav_driver, pick_driver,
                                       scenario, difficulty, seed, suite,
                                       cfg, log_dir)
                results.extend(rows)
                if progress:
                    progress(f"{method} {task} {scenario.value} "
                             f"{difficulty.value} seed {seed} done")
    return results


def run_dynamic(method: str, n_episodes: int, *, policies: dict | None = None,
                config: Config | None = None, seed: int = 0,
                speed: float | None = None, log_dir=None) -> list[EpisodeResult]:
    """Trials against one obstacle shuttling across the corridor.

    The crossing box was never seen during mapping (classical) or training
    (policies); speed=0 degenerates to an ordinary static scene."""
    cfg = config or Config()
    seeds = [derive_seed(seed, 0xD1A, e) for e in range(n_episodes)]
    scenes = [crossing_scene(s, speed=speed) for s in seeds]
    if method == "classical":
        out = []
        for e, (s, dyn) in enumerate(zip(seeds, scenes)):
            static = dataclasses.replace(dyn, obstacles=tuple(
                o for o in dyn.obstacles if o.velocity is None))
            r = classical_episode(static, cfg, seed=derive_seed(seed, 0xC2, e),
                                  exec_scene=dyn)
            out.append(EpisodeResult(
                method=method, task=TASK_REACH, scenario="Dynamic",
                difficulty="-", seed=seed, episode_id=e,
                success=bool(r["success"]),
                duration_s=r["steps"] * cfg.episode.dt,
                collisions=int(r["done_reason"] == DONE_COLLISION),
                min_clearance=float("nan")))
        return out
    if not policies or "nav" not in policies:
        raise ConfigError(f"method {method!r} needs a nav checkpoint")
    driver = PolicyDriver(policies["nav"])
    env_seed = derive_seed(seed, 0xE2B)
    env = VecEnv(scenes, task="nav", num_envs=n_episodes, config=cfg,
                 seed=env_seed, auto_reset=False)
    log = None
    if log_dir is not None:
        os.makedirs(log_dir, exist_ok=True)
        log = TrajectoryLog(os.path.join(log_dir, f"{method}_dynamic_s{seed}.jsonl"))
        for i, s in enumerate(seeds):
            log.header(env=i, kind="dynamic", task="nav", scene_seed=s,
                       env_seed=env_seed, speed=speed,
                       timeout_steps=cfg.episode.timeout_steps)
    bound = driver.bind(env, seed=derive_seed(seed, 0x0B5))
    minc = _run_to_completion(env, bound, log=log)
    if log is not None:
        log.close()
    return _results_from_env(
        env, minc, method=method, task=TASK_REACH, scenario="Dynamic",
        difficulty="-", seed=seed, episode_base=0, success_reason=DONE_GOAL)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def results_csv(results) -> str:
    rows = sorted(results, key=lambda r: (r.method, r.task, r.scenario,
                                          r.difficulty, r.seed, r.episode_id))
    return "\n".join([",".join(CSV_COLUMNS)] + [r.csv_row() for r in rows]) + "\n"


def results_table(results) -> str:
    """Success rate / mean duration per cell, grouped task, scenario rows,
    difficulty columns."""
    cells = {}
    for r in results:
        cells.setdefault((r.task, r.scenario, r.difficulty), []).append(r)
    tasks = [t for t in (TASK_REACH, TASK_PICK, TASK_PLACE)
             if any(k[0] == t for k in cells)]
    diffs = [d.value for d in DIFFICULTIES]
    extra = sorted({k[2] for k in cells} - set(diffs))
    diffs = [d for d in diffs if any(k[2] == d for k in cells)] + extra
    lines = []
    header = f"{'task':<7} {'scenario':<18}" + "".join(
        f"{d + ' sr':>10}{'dur':>7}" for d in diffs)
    lines.append(header)
    lines.append("-" * len(header))
    for task in tasks:
        scens = sorted({k[1] for k in cells if k[0] == task})
        for sc in scens:
            row = f"{task:<7} {sc:<18}"
            for d in diffs:
                rs = cells.get((task, sc, d))
                if rs is None:
                    row += f"{'-':>10}{'-':>7}"
                else:
                    sr = np.mean([r.success for r in rs])
                    du = np.mean([r.duration_s for r in rs])
                    row += f"{sr:>10.2f}{du:>7.1f}"
            lines.append(row)
    return "\n".join(lines) + "\n"


def emit_tables(results, csv_path=None, table_path=None):
    """Render results as (csv_text, table_text), optionally writing files."""
    results = list(results)
    if not results:
        raise ContractViolation("no benchmark results to emit")
    csv_text = results_csv(results)
    table_text = results_table(results)
    if csv_path is not None:
        with open(csv_path, "w") as f:
            f.write(csv_text)
    if table_path is not None:
        with open(table_path, "w") as f:
            f.write(table_text)
    return csv_text, table_text


# ---------------------------------------------------------------------------
# independent replay
# ---------------------------------------------------------------------------

def replay_log(path, config: Config | None = None):
    """Re-simulate a trajectory log and recompute terminations.

    Returns one dict per env: success/collisions recomputed from the replay
    plus the largest deviation between replayed and logged base states.
    The runner is not trusted: scenes are rebuilt from seeds and the logged
    commands are pushed through a fresh env.
    """
    cfg = config or Config()
    headers, steps = {}, {}
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            if rec["type"] == "header":
                headers[rec["env"]] = rec
            else:
                steps.setdefault(rec["env"], []).append(rec)
    if not headers:
        raise ContractViolation(f"{path}: no headers")
    n = max(headers) + 1
    heads = [headers[i] for i in range(n)]
    kind = heads[0]["kind"]
    task = heads[0]["task"]
    cfg = dataclasses.replace(cfg, episode=dataclasses.replace(
        cfg.episode, timeout_steps=int(heads[0]["timeout_steps"])))
    scenes = [_rebuild_scenes(h) for h in heads]
    env = VecEnv(scenes, task=task, num_envs=n, config=cfg,
                 seed=int(heads[0]["env_seed"]), auto_reset=False)
    for i in range(n):
        steps.setdefault(i, [])
        steps[i].sort(key=lambda r: r["t"])
    max_err = np.zeros(n)
    cursor = np.zeros(n, dtype=int)
    last_state = [None] * n
    t = 0
    while True:
        live = [i for i in range(n) if cursor[i] < len(steps[i])]
        if not live:
            break
        cmds = np.zeros((n, 10))
        for i in live:
            cmds[i] = np.array(steps[i][cursor[i]]["action"])
        env.step(cmds)
        if kind == "place":
            lifted = env.done & (env.done_reason == DONE_LIFTED)
            env.done[lifted] = False
            env.done_reason[lifted] = 0
        for i in live:
            rec = steps[i][cursor[i]]
            err = np.abs(env.base[i] - np.array(rec["base"])).max()
            max_err[i] = max(max_err[i], err)
            cursor[i] += 1
            if cursor[i] == len(steps[i]):
                last_state[i] = {
                    "obj": env.obj_pos[i].copy() if task == "pick" else None,
                    "grasped": bool(env.grasped[i]) if task == "pick" else False,
                }
                # freeze it exactly like the runner did (composite episodes
                # end by predicate, not by a VecEnv done reason)
                env.done[i] = True
        t += 1
        if t > cfg.episode.timeout_steps + 5:
            break
    out = []
    for i in range(n):
        reason = int(env.done_reason[i])
        if kind == "place":
            marker = np.array(heads[i]["marker"])
            ls = last_state[i]
            ok = bool(ls and ls["grasped"] and np.linalg.norm(
                ls["obj"][0:2] - marker) <= PLACE_RADIUS)
        elif kind == "pick":
            ok = reason == DONE_LIFTED
        else:
            ok = reason == DONE_GOAL
        out.append({"env": i, "success": ok,
                    "collisions": int(reason == DONE_COLLISION),
                    "reason": reason, "max_base_err": float(max_err[i]),
                    "steps": len(steps[i])})
    return out

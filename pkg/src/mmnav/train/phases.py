"""Training phase drivers.

Navigation is trained either in one stage under partial observability
(joint visuomotor optimization) or in two decoupled stages: first a
privileged teacher that sees every scandot within range, then a student
that must aim the camera and is rewarded for matching the teacher's motor
commands from its partial view.  The pick policy trains directly on the
shaped task reward.  Each driver writes a checkpoint, a metrics CSV and a
config echo into its output directory.
"""

from __future__ import annotations

import copy
import csv
import math
import os
from dataclasses import dataclass

import numpy as np
import torch

from ..config import Config, dump_config
from ..errors import TrainingDiverged
from ..perception import CameraIntrinsics
from ..policy import (ActorCritic, PointNetEncoder, SlotMLPEncoder,
                      VectorEncoder, make_obs_builder, save_policy)
from ..robot import CAM_PAN, CAM_TILT
from ..seeding import derive_seed
from ..world import VecEnv, generate_scene
from ..world.scenes import Difficulty, Scenario, generate_pick_scene
from .evaluate import evaluate_policy
from .ppo import PpoTrainer, _to_torch

DIFFICULTIES = {"easy": Difficulty.EASY, "medium": Difficulty.MEDIUM,
                "hard": Difficulty.HARD}


def make_scene_pool(difficulty: str, seed: int, count: int = 24,
                    scenario: str = "both", cfg=None):
    """Deterministic training pool mixing both corridor layouts."""
    diff = DIFFICULTIES[difficulty]
    scenarios = {"s1": [Scenario.STRAIGHT_CORRIDOR], "s2": [Scenario.L_CORRIDOR],
                 "both": [Scenario.STRAIGHT_CORRIDOR, Scenario.L_CORRIDOR]}[scenario]
    pool = []
    for k in range(count):
        sc = scenarios[k % len(scenarios)]
        pool.append(generate_scene(diff, sc, derive_seed(seed, 0x5C0 + k),
                                   cfg=cfg))
    return pool


def make_pick_pool(seed: int, count: int = 24):
    return [generate_pick_scene(derive_seed(seed, 0x71C0 + k)) for k in range(count)]


def cam_nominal_normalized(model) -> np.ndarray:
    """Normalized action values that hold the camera at its nominal pose."""
    pan = (0.0 - model.joint_mid[CAM_PAN]) / model.joint_half[CAM_PAN]
    tilt = (-20.0 * math.pi / 180.0 - model.joint_mid[CAM_TILT]) \
        / model.joint_half[CAM_TILT]
    return np.array([pan, tilt])


@dataclass
class PhaseResult:
    checkpoint: str
    metrics: list
    final_eval: object
    policy: ActorCritic


class MetricsLog:
    FIELDS = ["step", "mean_reward", "success_rate", "loss", "policy_loss",
              "value_loss", "entropy", "eval_success", "eval_return"]

    def __init__(self):
        self.rows = []

    def add(self, **kw):
        self.rows.append({k: kw.get(k, "") for k in self.FIELDS})

    def write(self, path):
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=self.FIELDS)
            w.writeheader()
            w.writerows(self.rows)


def _echo_config(cfg: Config, out_dir: str):
    with open(os.path.join(out_dir, "config_echo.ini"), "w") as f:
        f.write(dump_config(cfg))


def run_ppo(policy: ActorCritic, env, obs_builder, cfg: Config, *, seed: int,
            out_dir: str, name: str, meta: dict, eval_bundle=None,
            reward_hook=None, action_transform=None,
            progress=None) -> PhaseResult:
    """Shared PPO loop: collect/update until budget, plateau or target."""
    os.makedirs(out_dir, exist_ok=True)
    ppo = cfg.ppo
    trainer = PpoTrainer(policy, env, obs_builder, ppo, seed=seed,
                         reward_hook=reward_hook,
                         action_transform=action_transform)
    log = MetricsLog()
    ckpt_path = os.path.join(out_dir, f"{name}.ckpt")
    updates = max(1, ppo.total_steps // (ppo.bptt_len * ppo.segments_per_rollout
                                         * env.n))
    best_success = -1.0
    evals_since_best = 0
    last_eval = None
    for u in range(updates):
        rollout = trainer.collect()
        stats = trainer.update(rollout)
        if stats.get("diverged"):
            save_policy(ckpt_path, policy, meta)
            log.write(os.path.join(out_dir, "metrics.csv"))
            raise TrainingDiverged(f"{name}: non-finite loss at update {u}; "
                                   f"last finite checkpoint kept at {ckpt_path}")
        row = dict(step=trainer.total_steps,
                   mean_reward=round(stats["mean_reward"], 6),
                   success_rate=round(trainer.success_window(), 4),
                   loss=round(stats["loss"], 6),
                   policy_loss=round(stats["policy_loss"], 6),
                   value_loss=round(stats["value_loss"], 6),
                   entropy=round(stats["entropy"], 6))
        if eval_bundle is not None and (u + 1) % ppo.eval_every_updates == 0:
            ev_env, ev_obs = eval_bundle()
            last_eval = evaluate_policy(policy, ev_env, ev_obs,
                                        ppo.eval_episodes,
                                        action_transform=action_transform)
            row["eval_success"] = round(last_eval.success_rate, 4)
            row["eval_return"] = round(last_eval.mean_return, 4)
            if last_eval.success_rate > best_success + 1e-9:
                best_success = last_eval.success_rate
                evals_since_best = 0
            else:
                evals_since_best += 1
            if last_eval.success_rate >= ppo.stop_success:
                log.add(**row)
                break
            if evals_since_best >= ppo.plateau_patience:
                log.add(**row)
                break
        log.add(**row)
        if progress is not None:
            progress(u, updates, row)
    save_policy(ckpt_path, policy, meta)
    log.write(os.path.join(out_dir, "metrics.csv"))
    _echo_config(cfg, out_dir)
    return PhaseResult(checkpoint=ckpt_path, metrics=log.rows,
                       final_eval=last_eval, policy=policy)


def _nav_env(cfg: Config, seed: int, difficulty: str, scenario: str,
             num_envs: int, pool: int = 24) -> VecEnv:
    scenes = make_scene_pool(difficulty, seed, count=pool, scenario=scenario)
    return VecEnv(scenes, task="nav", num_envs=num_envs, config=cfg, seed=seed)


def _build_encoder(variant: str, depth_hw=None):
    if variant == "nopointnet":
        return SlotMLPEncoder(slots=8)
    return PointNetEncoder()


def _obs_kind(stage: str, variant: str) -> str:
    if variant == "mapping":
        return "mapping"
    if variant == "nopointnet":
        return "slots"
    return "scandots_full" if stage == "teacher" else "scandots_masked"


def train_phase1a(cfg: Config, *, out_dir: str, seed: int = 0,
                  difficulty: str = "easy", scenario: str = "both",
                  variant: str = "", max_range: float | None = None,
                  progress=None) -> PhaseResult:
    """Privileged teacher: full scandots in range, camera held nominal."""
    torch.manual_seed(derive_seed(seed, 0x1A) % 2 ** 63)
    env = _nav_env(cfg, seed, difficulty, scenario, cfg.ppo.num_envs)
    kind = _obs_kind("teacher", variant)
    obs = make_obs_builder(kind, env, seed=seed, max_range=max_range)
    policy = ActorCritic(_build_encoder(variant),
                         init_log_std=cfg.ppo.init_log_std)
    nominal = cam_nominal_normalized(env.model)
    coef = cfg.ppo.cam_nominal_coef

    def reward_hook(ctx):
        pen = ((ctx.actions[:, 8:10] - nominal) ** 2).sum(axis=1)
        return ctx.rewards - coef * pen

    def eval_bundle():
        ev = _nav_env(cfg, derive_seed(seed, 0xE7A1), difficulty, scenario,
                      min(64, cfg.ppo.num_envs))
        return ev, make_obs_builder(kind, ev, seed=seed + 1, max_range=max_range)

    meta = {"encoder": "slots" if variant == "nopointnet" else "pointnet",
            "task": "nav", "stage": "1a", "variant": variant,
            "obs_kind": kind, "max_range": max_range or 2.0}
    return run_ppo(policy, env, obs, cfg, seed=seed, out_dir=out_dir,
                   name="phase1a" + (f"_{variant}" if variant else ""),
                   meta=meta, eval_bundle=eval_bundle,
                   reward_hook=reward_hook, progress=progress)


class TeacherMatchReward:
    """Phase-1b reward: negative squared distance between the student's
    executed motor command and what the privileged teacher would do on the
    exact same states.  The teacher's recurrent state follows the student's
    trajectory and resets with it."""

    def __init__(self, teacher: ActorCritic, teacher_obs, n: int, dims: int):
        self.teacher = teacher.eval()
        self.teacher_obs = teacher_obs
        self.hidden = teacher.initial_hidden(n)
        self.dims = dims
        self.last_label = None
        self.teacher_obs_cached = None

    @torch.no_grad()
    def __call__(self, ctx) -> np.ndarray:
        self.hidden.reset_rows(torch.from_numpy(ctx.resets))
        pro, perc, task = self.teacher_obs_cached
        tperc = _to_torch(perc)
        tperc = tperc[0] if not isinstance(perc, tuple) else tperc
        mean, _, _, self.hidden = self.teacher.step(
            torch.from_numpy(pro), tperc, torch.from_numpy(task), self.hidden)
        label = mean.numpy()[:, :self.dims]
        self.last_label = label
        err = ((ctx.actions[:, :self.dims] - label) ** 2).sum(axis=1)
        return -err

    def capture(self):
        """Snapshot the privileged observation at the pre-step state."""
        self.teacher_obs_cached = self.teacher_obs()


def train_phase1b(teacher_ckpt_policy: ActorCritic, cfg: Config, *,
                  out_dir: str, seed: int = 0, difficulty: str = "medium",
                  scenario: str = "both", variant: str = "",
                  progress=None) -> PhaseResult:
    """Camera-learning student initialized from, and imitating, the teacher."""
    torch.manual_seed(derive_seed(seed, 0x1B) % 2 ** 63)
    env = _nav_env(cfg, seed, difficulty, scenario, cfg.ppo.num_envs)
    student_kind = _obs_kind("student", variant)
    obs = make_obs_builder(student_kind, env, seed=seed)
    policy = copy.deepcopy(teacher_ckpt_policy)
    teacher = copy.deepcopy(teacher_ckpt_policy)
    for p in teacher.parameters():
        p.requires_grad_(False)
    teacher_obs = make_obs_builder(_obs_kind("teacher", variant), env, seed=seed)
    matcher = TeacherMatchReward(teacher, teacher_obs, env.n,
                                 cfg.ppo.imitation_action_dims)

    def reward_hook(ctx):
        return matcher(ctx)

    # the matcher must observe the pre-step state: wrap the obs builder so
    # every policy observation also snapshots the teacher's view
    def wrapped_obs():
        matcher.capture()
        return obs()

    def eval_bundle():
        ev = _nav_env(cfg, derive_seed(seed, 0xE7B1), difficulty, scenario,
                      min(64, cfg.ppo.num_envs))
        return ev, make_obs_builder(student_kind, ev, seed=seed + 1)

    meta = {"encoder": "slots" if variant == "nopointnet" else "pointnet",
            "task": "nav", "stage": "1b", "variant": variant,
            "obs_kind": student_kind, "max_range": 2.0}
    return run_ppo(policy, env, wrapped_obs, cfg, seed=seed, out_dir=out_dir,
                   name="phase1b" + (f"_{variant}" if variant else ""),
                   meta=meta, eval_bundle=eval_bundle,
                   reward_hook=reward_hook, progress=progress)


def train_cvo(cfg: Config, *, out_dir: str, seed: int = 0,
              difficulty: str = "medium", scenario: str = "both",
              variant: str = "", fix_pose=None, progress=None) -> PhaseResult:
    """Single-stage joint optimization under the masked view.

    fix_pose: optional (pan, tilt) radians; when given the camera action is
    overridden every step (the frozen-camera comparison)."""
    torch.manual_seed(derive_seed(seed, 0xC0) % 2 ** 63)
    env = _nav_env(cfg, seed, difficulty, scenario, cfg.ppo.num_envs)
    kind = _obs_kind("student", variant)
    obs = make_obs_builder(kind, env, seed=seed)
    policy = ActorCritic(_build_encoder(variant),
                         init_log_std=cfg.ppo.init_log_std)
    action_transform = None
    if fix_pose is not None:
        from ..baselines.fixcam import fixcam_action_transform
        action_transform = fixcam_action_transform(env.model, fix_pose)

    def eval_bundle():
        ev = _nav_env(cfg, derive_seed(seed, 0xE7C1), difficulty, scenario,
                      min(64, cfg.ppo.num_envs))
        return ev, make_obs_builder(kind, ev, seed=seed + 1)

    name = "cvo" + (f"_{variant}" if variant else "")
    if fix_pose is not None:
        name = "fixcam"
    meta = {"encoder": "slots" if variant == "nopointnet" else "pointnet",
            "task": "nav", "stage": "cvo", "variant": variant,
            "obs_kind": kind, "max_range": 2.0,
            "fix_pose": list(fix_pose) if fix_pose is not None else None}
    return run_ppo(policy, env, obs, cfg, seed=seed, out_dir=out_dir,
                   name=name, meta=meta, eval_bundle=eval_bundle,
                   action_transform=action_transform, progress=progress)


def train_pick(cfg: Config, *, out_dir: str, seed: int = 0,
               progress=None) -> PhaseResult:
    """Pick policy on the shaped grasp-and-lift reward."""
    torch.manual_seed(derive_seed(seed, 0x71CC) % 2 ** 63)
    scenes = make_pick_pool(seed)
    env = VecEnv(scenes, task="pick", num_envs=cfg.ppo.num_envs, config=cfg,
                 seed=seed)
    obs = make_obs_builder("pick", env, seed=seed)
    policy = ActorCritic(VectorEncoder(4), init_log_std=cfg.ppo.init_log_std)

    def eval_bundle():
        ev_scenes = make_pick_pool(derive_seed(seed, 0xE7D1))
        ev = VecEnv(ev_scenes, task="pick", num_envs=min(64, cfg.ppo.num_envs),
                    config=cfg, seed=seed + 1)
        return ev, make_obs_builder("pick", ev, seed=seed + 1)

    meta = {"encoder": "vector", "perc_dim": 4, "task": "pick", "stage": "pick",
            "obs_kind": "pick"}
    return run_ppo(policy, env, obs, cfg, seed=seed, out_dir=out_dir,
                   name="pick", meta=meta, eval_bundle=eval_bundle,
                   progress=progress)

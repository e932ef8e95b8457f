"""Scandot-teacher to depth-student distillation (asynchronous DAgger).

A collector rolls the beta-mixed policy in depth-rendering environments and
pushes fixed-length segments of (depth, proprioception, goal, teacher
label); a learner regresses the student onto the labels with short-sequence
unrolls.  Labels always come from the frozen teacher evaluated on its own
privileged scandot view of the same states.  The two roles run either
strictly alternating in one thread or concurrently, sharing only the
bounded segment buffer and an atomically swapped weight snapshot.
"""

from __future__ import annotations

import copy
import csv
import os
import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np
import torch

from ..config import Config
from ..errors import TrainingDiverged
from ..perception import CameraIntrinsics
from ..policy import ActorCritic, DepthEncoder, save_policy
from ..policy.obs import DepthObs, ScandotObs
from ..seeding import derive_seed
from ..world import VecEnv
from .phases import make_scene_pool
from .ppo import _to_torch


@dataclass
class Segment:
    depth: np.ndarray     # (L, 1, H, W) float32
    proprio: np.ndarray   # (L, 21)
    task: np.ndarray      # (L, 3)
    resets: np.ndarray    # (L,) float32
    labels: np.ndarray    # (L, A) teacher action means


class DaggerBuffer:
    """Bounded segment store: oldest segments are evicted when full, the
    learner samples uniformly (with replacement) once a minimum fill is
    reached, and an idle side raises after `timeout` seconds."""

    def __init__(self, capacity_transitions: int, segment_len: int,
                 timeout: float = 60.0):
        self.capacity = max(1, capacity_transitions // segment_len)
        self.segments: deque[Segment] = deque()
        self.lock = threading.Lock()
        self.not_empty = threading.Condition(self.lock)
        self.timeout = timeout
        self.pushed = 0
        self.closed = False

    def push(self, seg: Segment) -> None:
        with self.lock:
            if len(self.segments) >= self.capacity:
                self.segments.popleft()
            self.segments.append(seg)
            self.pushed += 1
            self.not_empty.notify_all()

    def close(self) -> None:
        with self.lock:
            self.closed = True
            self.not_empty.notify_all()

    def sample(self, k: int, rng: np.random.Generator, min_fill: int = 1):
        deadline = time.monotonic() + self.timeout
        with self.not_empty:
            while len(self.segments) < min_fill and not self.closed:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TrainingDiverged(
                        "distillation stalled: collector produced no data "
                        f"for {self.timeout:.0f} s")
                self.not_empty.wait(timeout=min(remaining, 1.0))
            if len(self.segments) == 0:
                return None  # closed and drained
            idx = rng.integers(len(self.segments), size=k)
            return [self.segments[i] for i in idx]

    def __len__(self):
        with self.lock:
            return len(self.segments)


def beta_schedule(step: int, total: int, anneal_frac: float) -> float:
    """Teacher-mixing probability: 1 -> 0 linearly over the first fraction."""
    horizon = max(1, int(total * anneal_frac))
    return float(max(0.0, 1.0 - step / horizon))


class Collector:
    """Rolls the mixed policy, labels states with the teacher, emits segments."""

    def __init__(self, teacher: ActorCritic, student: ActorCritic, env: VecEnv,
                 intr: CameraIntrinsics, cfg, *, seed: int, ideal: bool):
        self.teacher = teacher
        self.env = env
        self.cfg = cfg
        self.student = copy.deepcopy(student)
        self.student.eval()
        self.student_obs = DepthObs(env, seed=seed, intr=intr, ideal=ideal)
        self.teacher_obs = ScandotObs(env, masked=True, intr=CameraIntrinsics())
        self.t_hidden = teacher.initial_hidden(env.n)
        self.s_hidden = self.student.initial_hidden(env.n)
        self.pending = np.ones(env.n, dtype=bool)
        self.rng = np.random.default_rng(derive_seed(seed, 0xDA66E4))
        self.steps = 0
        self._weights_box = [None]  # atomically swapped state_dict snapshot

    def offer_weights(self, state_dict) -> None:
        self._weights_box[0] = state_dict

    def _maybe_refresh_weights(self) -> None:
        snap = self._weights_box[0]
        if snap is not None:
            self.student.load_state_dict(snap)
            self._weights_box[0] = None

    @torch.no_grad()
    def collect_segment(self, beta: float):
        """Step seg_len times; returns one Segment per env."""
        self._maybe_refresh_weights()
        n = self.env.n
        L = self.cfg.segment_len
        hw = (self.student_obs.intr.height, self.student_obs.intr.width)
        depth = np.empty((L, n, 1) + hw, dtype=np.float32)
        pro = np.empty((L, n, 21), dtype=np.float32)
        task = np.empty((L, n, 3), dtype=np.float32)
        resets = np.empty((L, n), dtype=np.float32)
        labels = np.empty((L, n, self.teacher.action_dim), dtype=np.float32)
        for t in range(L):
            r = self.pending.copy()
            self.t_hidden.reset_rows(torch.from_numpy(r))
            self.s_hidden.reset_rows(torch.from_numpy(r))
            s_pro, s_depth, s_task = self.student_obs()
            t_pro, t_perc, t_task = self.teacher_obs()
            t_mean, _, _, self.t_hidden = self.teacher.step(
                torch.from_numpy(t_pro), _to_torch(t_perc),
                torch.from_numpy(t_task), self.t_hidden)
            s_mean, _, _, self.s_hidden = self.student.step(
                torch.from_numpy(s_pro), torch.from_numpy(s_depth),
                torch.from_numpy(s_task), self.s_hidden)
            label = t_mean.numpy()
            use_teacher = self.rng.random(n) < beta
            exec_a = np.where(use_teacher[:, None], label, s_mean.numpy())
            depth[t] = s_depth
            pro[t] = s_pro
            task[t] = s_task
            resets[t] = r
            labels[t] = label
            _, dones, _ = self.env.step(
                self.env.model.commands_from_normalized(exec_a.astype(np.float64)))
            self.pending = dones.copy()
            self.steps += n
        return [Segment(depth[:, i], pro[:, i], task[:, i], resets[:, i],
                        labels[:, i]) for i in range(n)]


class Learner:
    """Regresses the student's action mean onto teacher labels."""

    def __init__(self, student: ActorCritic, cfg, *, seed: int):
        self.student = student
        self.cfg = cfg
        self.rng = np.random.default_rng(derive_seed(seed, 0x1EA4))
        self.opt = torch.optim.Adam(student.parameters(), lr=cfg.lr)
        self.iters = 0
        self._frozen = None
        self.losses = []

    def _apply_freeze(self) -> None:
        freeze = self.iters < self.cfg.freeze_iters
        if freeze == self._frozen:
            return
        self._frozen = freeze
        for name, p in self.student.named_parameters():
            if not name.startswith("encoder."):
                p.requires_grad_(not freeze)

    def step(self, segments: list) -> float:
        self._apply_freeze()
        depth = torch.from_numpy(np.stack([s.depth for s in segments], axis=1))
        pro = torch.from_numpy(np.stack([s.proprio for s in segments], axis=1))
        task = torch.from_numpy(np.stack([s.task for s in segments], axis=1))
        resets = torch.from_numpy(np.stack([s.resets for s in segments], axis=1))
        labels = torch.from_numpy(np.stack([s.labels for s in segments], axis=1))
        h0 = self.student.initial_hidden(len(segments))
        means, _ = self.student.unroll(pro, depth, task, resets, h0)
        loss = ((means - labels) ** 2).mean()
        if not torch.isfinite(loss):
            raise TrainingDiverged("distillation loss became non-finite")
        self.opt.zero_grad(set_to_none=True)
        loss.backward()
        self.opt.step()
        self.iters += 1
        val = float(loss.detach())
        self.losses.append(val)
        return val


def _student_from_teacher(teacher: ActorCritic, intr: CameraIntrinsics,
                          seed: int) -> ActorCritic:
    """Depth student with the trunk transplanted from the teacher."""
    torch.manual_seed(derive_seed(seed, 0xD157) % 2 ** 63)
    student = ActorCritic(DepthEncoder(height=intr.height, width=intr.width),
                          proprio_dim=teacher.proprio_dim,
                          task_dim=teacher.task_dim,
                          action_dim=teacher.action_dim,
                          hidden_dim=teacher.hidden_dim,
                          share_trunk=teacher.share_trunk)
    t_state = teacher.state_dict()
    s_state = student.state_dict()
    for k in s_state:
        if not k.startswith("encoder.") and k in t_state \
                and t_state[k].shape == s_state[k].shape:
            s_state[k] = t_state[k].clone()
    student.load_state_dict(s_state)
    return student


def distill(teacher: ActorCritic, cfg: Config, *, out_dir: str, seed: int = 0,
            mode: str = "async", difficulty: str = "easy",
            scenario: str = "both", progress=None):
    """Distill a scandot teacher into a depth student.

    mode="async": one collector thread + the learner in the calling thread.
    mode="sync": strict alternation (collect one round of segments, then run
    the matching number of learner iterations) for the speedup comparison.
    Same total env steps and learner iterations either way.
    """
    os.makedirs(out_dir, exist_ok=True)
    d = cfg.dagger
    intr = CameraIntrinsics(width=44, height=29) if d.low_res \
        else CameraIntrinsics()
    scenes = make_scene_pool(difficulty, seed, count=16, scenario=scenario)
    env = VecEnv(scenes, task="nav", num_envs=d.num_envs, config=cfg, seed=seed)
    student = _student_from_teacher(teacher, intr, seed)
    collector = Collector(teacher, student, env, intr, d, seed=seed,
                          ideal=d.ideal_depth)
    learner = Learner(student, d, seed=seed)
    buffer = DaggerBuffer(d.buffer_capacity, d.segment_len,
                          timeout=d.deadlock_timeout_s)
    rounds = max(1, d.total_steps // (d.segment_len * d.num_envs))
    iters_per_round = max(1, int(round(d.learner_iters_per_segment)))
    total_learner_iters = rounds * iters_per_round
    t_start = time.monotonic()

    def collect_all():
        try:
            for r in range(rounds):
                beta = beta_schedule(collector.steps, d.total_steps,
                                     d.beta_anneal_frac)
                for seg in collector.collect_segment(beta):
                    buffer.push(seg)
        finally:
            buffer.close()

    if mode == "async":
        th = threading.Thread(target=collect_all, name="dagger-collector",
                              daemon=True)
        th.start()
        it = 0
        while it < total_learner_iters:
            batch = buffer.sample(d.batch_segments, learner.rng,
                                  min_fill=min(d.batch_segments,
                                               d.num_envs))
            if batch is None:
                break
            learner.step(batch)
            it += 1
            if it % d.sync_weights_every == 0:
                snap = {k: v.detach().clone()
                        for k, v in student.state_dict().items()}
                collector.offer_weights(snap)
            if progress is not None:
                progress(it, total_learner_iters, learner.losses[-1])
        th.join(timeout=d.deadlock_timeout_s)
        if th.is_alive():
            raise TrainingDiverged("collector thread failed to finish")
    elif mode == "sync":
        for r in range(rounds):
            beta = beta_schedule(collector.steps, d.total_steps,
                                 d.beta_anneal_frac)
            for seg in collector.collect_segment(beta):
                buffer.push(seg)
            for _ in range(iters_per_round):
                batch = buffer.sample(d.batch_segments, learner.rng)
                learner.step(batch)
                if learner.iters % d.sync_weights_every == 0:
                    collector.offer_weights(
                        {k: v.detach().clone()
                         for k, v in student.state_dict().items()})
            if progress is not None:
                progress(r, rounds, learner.losses[-1])
    else:
        raise ValueError(f"unknown distillation mode {mode!r}")

    wall = time.monotonic() - t_start
    meta = {"encoder": "depth", "task": "nav", "stage": "distill",
            "depth_hw": [intr.height, intr.width],
            "ideal_depth": d.ideal_depth, "obs_kind": "depth"}
    ckpt = os.path.join(out_dir, "student.ckpt")
    save_policy(ckpt, student, meta)
    with open(os.path.join(out_dir, "distill_metrics.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "loss"])
        for i, v in enumerate(learner.losses):
            w.writerow([i, f"{v:.6f}"])
    return {"checkpoint": ckpt, "student": student, "wall_s": wall,
            "env_steps": collector.steps, "learner_iters": learner.iters,
            "final_loss": learner.losses[-1] if learner.losses else float("nan"),
            "meta": meta}

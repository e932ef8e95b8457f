"""Greedy (mean-action) policy evaluation on vectorized environments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .ppo import _to_torch


@dataclass
class EvalStats:
    episodes: int
    success_rate: float
    mean_return: float
    mean_duration_s: float
    mean_final_goal_dist: float
    cam_action_var: float
    successes: list = field(default_factory=list)

    def row(self) -> dict:
        return {"episodes": self.episodes, "success_rate": self.success_rate,
                "mean_return": self.mean_return,
                "mean_duration_s": self.mean_duration_s,
                "mean_final_goal_dist": self.mean_final_goal_dist}


@torch.no_grad()
def evaluate_policy(policy, env, obs_builder, n_episodes: int,
                    action_transform=None, max_steps: int | None = None):
    """Roll the deterministic policy until n_episodes finish."""
    policy.eval()
    n = env.n
    hidden = policy.initial_hidden(n)
    pending = np.ones(n, dtype=bool)
    done_count = 0
    successes, returns, durations, dists = [], [], [], []
    cam_actions = []
    dt = env.cfg.episode.dt
    steps = 0
    limit = max_steps or (n_episodes * env.cfg.episode.timeout_steps * 4) // n + 1000
    while done_count < n_episodes and steps < limit:
        hidden.reset_rows(torch.from_numpy(pending))
        pro, perc, task = obs_builder()
        tperc = _to_torch(perc)
        tperc = tperc[0] if not isinstance(perc, tuple) else tperc
        mean, _, _, hidden = policy.step(
            torch.from_numpy(pro), tperc, torch.from_numpy(task), hidden)
        a = mean.numpy().astype(np.float64)
        if action_transform is not None:
            a = action_transform(a)
        cam_actions.append(a[:, 8:10].copy())
        _, dones, info = env.step(env.model.commands_from_normalized(a))
        for i in np.flatnonzero(dones):
            successes.append(bool(info["done_reason"][i] in (1, 4)))
            returns.append(float(info["episode_return"][i]))
            durations.append(float(info["steps"][i]) * dt)
            dists.append(float(info["goal_dist"][i]))
            done_count += 1
        pending = dones.copy()
        steps += 1
    successes = successes[:n_episodes]
    returns = returns[:n_episodes]
    durations = durations[:n_episodes]
    dists = dists[:n_episodes]
    cam = np.concatenate(cam_actions, axis=0) if cam_actions else np.zeros((1, 2))
    return EvalStats(
        episodes=len(successes),
        success_rate=float(np.mean(successes)) if successes else 0.0,
        mean_return=float(np.mean(returns)) if returns else 0.0,
        mean_duration_s=float(np.mean(durations)) if durations else 0.0,
        mean_final_goal_dist=float(np.mean(dists)) if dists else float("nan"),
        cam_action_var=float(cam.var(axis=0).mean()),
        successes=successes)

"""Visibility-range ablation: retrain the privileged teacher with scandots
truncated at different radii and measure what the cap does to navigation.

The counterintuitive result this reproduces: a tighter sensing radius is
not a handicap.  Nearby geometry is what collision avoidance needs, and
the smaller point budget concentrates on it.
"""

from __future__ import annotations

import os

from ..config import Config
from ..policy import make_obs_builder
from ..seeding import derive_seed
from ..train import evaluate_policy, make_scene_pool, train_phase1a
from ..world import VecEnv

DEFAULT_RANGES = (1.0, 2.0, 3.0, 5.0)


def ablate_visibility(out_dir: str, *, ranges=DEFAULT_RANGES,
                      config: Config | None = None, seed: int = 0,
                      difficulty: str = "medium", scenario: str = "both",
                      eval_episodes: int = 30, progress=None) -> list[dict]:
    """Train one teacher per visibility range and evaluate each.

    Returns one row per range: {max_range, success_rate,
    mean_final_goal_dist, checkpoint}.  Evaluation scenes are shared across
    ranges (same seeds) so rows differ only in the sensing cap.
    """
    cfg = config or Config()
    rows = []
    for r in ranges:
        run_dir = os.path.join(out_dir, f"range_{r:g}")
        os.makedirs(run_dir, exist_ok=True)
        res = train_phase1a(cfg, out_dir=run_dir, seed=seed,
                            difficulty=difficulty, scenario=scenario,
                            max_range=float(r), progress=progress)
        ev_seed = derive_seed(seed, 0xAB1A7E)
        scenes = make_scene_pool(difficulty, ev_seed, count=eval_episodes,
                                 scenario=scenario)
        env = VecEnv(scenes, task="nav", num_envs=eval_episodes, config=cfg,
                     seed=ev_seed, auto_reset=True)
        obs = make_obs_builder("scandots_full", env, seed=ev_seed,
                               max_range=float(r))
        stats = evaluate_policy(res.policy, env, obs, eval_episodes)
        rows.append({"max_range": float(r),
                     "success_rate": float(stats.success_rate),
                     "mean_final_goal_dist": float(stats.mean_final_goal_dist),
                     "checkpoint": res.checkpoint})
        if progress is not None:
            progress(None, None, {"ablation_range": r,
                                  "success": stats.success_rate})
    return rows


def ablation_table(rows) -> str:
    lines = [f"{'range (m)':>10} {'success':>9} {'final dist (m)':>15}"]
    for row in rows:
        lines.append(f"{row['max_range']:>10.1f} {row['success_rate']:>9.2f} "
                     f"{row['mean_final_goal_dist']:>15.2f}")
    return "\n".join(lines) + "\n"

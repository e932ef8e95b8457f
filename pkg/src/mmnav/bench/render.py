"""Top-down episode rendering from trajectory logs.

Given a log produced by the benchmark runner, rebuild the scene from its
header seeds and draw the base track, sampled footprints, camera frustum
wedges (pan joint + horizontal FOV) and the goal.  Output is a PNG; meant
for eyeballing behaviour, not for metrics.
"""

from __future__ import annotations

import json
import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib import patches

from ..config import Config
from ..errors import ContractViolation
from ..perception import CameraIntrinsics
from ..robot import CAM_PAN, RobotModel
from ..world import ObstacleKind
from .suite import _rebuild_scenes


def load_log(path):
    headers, steps = {}, {}
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            if rec["type"] == "header":
                headers[rec["env"]] = rec
            else:
                steps.setdefault(rec["env"], []).append(rec)
    if not headers:
        raise ContractViolation(f"{path}: no trajectory headers")
    for recs in steps.values():
        recs.sort(key=lambda r: r["t"])
    return headers, steps


def _rect(ax, lo, hi, **kw):
    ax.add_patch(patches.Rectangle((lo[0], lo[1]), hi[0] - lo[0],
                                   hi[1] - lo[1], **kw))


def _footprint(ax, x, y, theta, length, width, **kw):
    c, s = math.cos(theta), math.sin(theta)
    hl, hw = 0.5 * length, 0.5 * width
    corners = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    world = corners @ np.array([[c, s], [-s, c]]) + [x, y]
    ax.add_patch(patches.Polygon(world, closed=True, **kw))


def _frustum(ax, x, y, theta, pan, hfov, rng, **kw):
    a0 = theta + pan - 0.5 * hfov
    a1 = theta + pan + 0.5 * hfov
    arc = np.linspace(a0, a1, 12)
    pts = [(x, y)] + [(x + rng * math.cos(a), y + rng * math.sin(a)) for a in arc]
    ax.add_patch(patches.Polygon(np.array(pts), closed=True, **kw))


def render_episode(log_path, out_path, *, env_idx: int = 0,
                   config: Config | None = None,
                   frustum_every: int = 40, footprint_every: int = 25):
    """Render one env's episode from a trajectory log to a PNG."""
    cfg = config or Config()
    headers, steps = load_log(log_path)
    if env_idx not in headers:
        raise ContractViolation(f"{log_path}: no env {env_idx} in log")
    head = headers[env_idx]
    recs = steps.get(env_idx, [])
    if not recs:
        raise ContractViolation(f"{log_path}: env {env_idx} has no steps")
    scene = _rebuild_scenes(head)
    model = RobotModel(cfg.robot)
    intr = CameraIntrinsics()

    fig, ax = plt.subplots(figsize=(9, 6))
    for wall in scene.walls:
        _rect(ax, wall.lo, wall.hi, facecolor="0.55", edgecolor="none")
    for ob in scene.obstacles:
        if ob.kind == ObstacleKind.FLOATING:
            _rect(ax, ob.box.lo, ob.box.hi, facecolor="none",
                  edgecolor="tab:purple", hatch="//", linewidth=1.0)
        else:
            style = dict(facecolor="tab:red", alpha=0.8) \
                if ob.velocity is not None else dict(facecolor="0.25")
            _rect(ax, ob.box.lo, ob.box.hi, edgecolor="none", **style)
    if scene.table is not None:
        _rect(ax, scene.table.lo, scene.table.hi, facecolor="tab:brown",
              alpha=0.5, edgecolor="saddlebrown")
    if scene.object is not None:
        ax.plot(*scene.object.initial_position[0:2], "o", color="tab:orange",
                markersize=6, zorder=5)

    base = np.array([r["base"] for r in recs])
    joints = np.array([r["joints"] for r in recs])
    ax.plot(base[:, 0], base[:, 1], "-", color="tab:blue", linewidth=1.2,
            zorder=4)
    for k in range(0, len(recs), footprint_every):
        _footprint(ax, base[k, 0], base[k, 1], base[k, 2],
                   cfg.robot.base_length, cfg.robot.base_width,
                   facecolor="none", edgecolor="tab:blue", alpha=0.6,
                   zorder=4)
    for k in range(0, len(recs), frustum_every):
        _frustum(ax, base[k, 0], base[k, 1], base[k, 2], joints[k, CAM_PAN],
                 intr.hfov, intr.max_range, facecolor="gold", alpha=0.15,
                 edgecolor="goldenrod", linewidth=0.5, zorder=3)
    _footprint(ax, base[-1, 0], base[-1, 1], base[-1, 2],
               cfg.robot.base_length, cfg.robot.base_width,
               facecolor="tab:blue", alpha=0.5, zorder=4)

    goal = np.asarray(scene.goal)
    ax.plot(goal[0], goal[1], "*", color="tab:green", markersize=14, zorder=6)
    if head.get("marker") is not None:
        mk = head["marker"]
        ax.plot(mk[0], mk[1], "P", color="tab:green", markersize=9, zorder=6)

    reason = recs[-1]["reason"]
    names = {0: "running", 1: "goal", 2: "collision", 3: "timeout", 4: "lifted"}
    ax.set_title(f"{head['kind']} env {env_idx}: {names.get(reason, reason)} "
                 f"after {len(recs)} steps")
    ax.set_aspect("equal")
    ax.autoscale_view()
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path

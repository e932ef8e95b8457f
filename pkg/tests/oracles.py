"""Independent test oracles, written against first principles only.

Nothing here imports simulator internals beyond plain scene data; these
implementations deliberately avoid sharing code with the package so they can
disagree with it.
"""

from __future__ import annotations

import heapq
import math

import numpy as np


def grid_path_exists(boxes_xy: np.ndarray, start, goal, *, radius: float,
                     bounds, res: float = 0.05) -> bool:
    """Breadth-first 8-connected reachability on an inflated occupancy grid.

    boxes_xy: (B, 4) [x0, y0, x1, y1] footprints of everything the robot
    column could hit.  A cell is blocked when its center is within `radius`
    of any footprint.  `bounds` = (x_lo, x_hi, y_lo, y_hi).
    """
    x_lo, x_hi, y_lo, y_hi = bounds
    xs = np.arange(x_lo + res / 2, x_hi, res)
    ys = np.arange(y_lo + res / 2, y_hi, res)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    blocked = np.zeros(gx.shape, dtype=bool)
    for bx0, by0, bx1, by1 in boxes_xy:
        dx = np.maximum(np.maximum(bx0 - gx, gx - bx1), 0.0)
        dy = np.maximum(np.maximum(by0 - gy, gy - by1), 0.0)
        blocked |= dx * dx + dy * dy <= radius * radius
    def cell(p):
        return (int((p[0] - x_lo) / res), int((p[1] - y_lo) / res))
    si, sj = cell(start)
    ti, tj = cell(goal)
    shape = blocked.shape
    if not (0 <= si < shape[0] and 0 <= sj < shape[1]):
        return False
    if not (0 <= ti < shape[0] and 0 <= tj < shape[1]):
        return False
    if blocked[si, sj] or blocked[ti, tj]:
        return False
    seen = np.zeros(shape, dtype=bool)
    seen[si, sj] = True
    stack = [(si, sj)]
    while stack:
        i, j = stack.pop()
        if (i, j) == (ti, tj):
            return True
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ni, nj = i + di, j + dj
                if 0 <= ni < shape[0] and 0 <= nj < shape[1] \
                        and not seen[ni, nj] and not blocked[ni, nj]:
                    seen[ni, nj] = True
                    stack.append((ni, nj))
    return False


def scene_feasible(scene, *, radius: float = 0.24, res: float = 0.05,
                   column_top: float = 1.4) -> bool:
    """Whether a disc robot of `radius` can reach the goal from the origin."""
    rects = []
    solids = [w for w in scene.walls] + [o.box for o in scene.obstacles]
    if scene.table is not None:
        solids.append(scene.table)
    for b in solids:
        if b.lo[2] < column_top and b.hi[2] > 0.0:
            rects.append([b.lo[0], b.lo[1], b.hi[0], b.hi[1]])
    arr = np.array(rects) if rects else np.zeros((0, 4))
    if arr.shape[0]:
        x_lo = min(-1.5, arr[:, 0].min()) - 0.2
        x_hi = max(arr[:, 2].max(), scene.goal[0]) + 0.2
        y_lo = min(arr[:, 1].min(), scene.goal[1]) - 0.2
        y_hi = max(arr[:, 3].max(), scene.goal[1]) + 0.2
    else:
        x_lo, x_hi = -1.5, scene.goal[0] + 1.0
        y_lo, y_hi = -2.0, max(2.0, scene.goal[1] + 1.0)
    return grid_path_exists(arr, (0.0, 0.0), scene.goal[0:2], radius=radius,
                            bounds=(x_lo, x_hi, y_lo, y_hi), res=res)


def gae_reference(rewards, values, dones, gamma: float, lam: float,
                  bootstrap) -> np.ndarray:
    """Textbook generalized advantage recursion, scalar loop, float64."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    t_len = rewards.shape[0]
    adv = np.zeros_like(rewards)
    gae = np.zeros_like(rewards[0] if rewards.ndim > 1 else np.float64(0.0))
    next_v = np.asarray(bootstrap, dtype=np.float64)
    for t in reversed(range(t_len)):
        mask = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_v * mask - values[t]
        gae = delta + gamma * lam * mask * gae
        adv[t] = gae
        next_v = values[t]
    return adv


def frustum_visible_reference(point, cam_pos, cam_rot, hfov, vfov, max_range) -> bool:
    """Angle-arithmetic visibility check written independently of the kernel."""
    rel = np.asarray(cam_rot).T @ (np.asarray(point, dtype=np.float64) - cam_pos)
    x, y, z = rel
    if x <= 0:
        return False
    if math.hypot(x, math.hypot(y, z)) > max_range:
        return False
    if abs(math.atan2(y, x)) > hfov / 2:
        return False
    if abs(math.atan2(z, x)) > vfov / 2:
        return False
    return True

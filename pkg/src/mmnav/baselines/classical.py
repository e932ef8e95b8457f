"""Classical navigation pipeline: simulated planar lidar, log-odds grid
mapping from a scripted survey tour, Monte Carlo localization against a
likelihood field, A* planning with obstacle inflation, and pure-pursuit
tracking with the arm stowed.

The lidar scans a single horizontal plane, so anything hovering above it is
invisible: the map is built once before execution and the plan is followed
open-loop with respect to the world (no re-mapping, and re-planning only
behind a flag).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from ..config import BaselineConfig
from ..geom import Pose2, wrap_angle
from ..robot import (CAM_TILT, EXTENSION, GRIPPER, LIFT, RobotModel, Action)
from ..seeding import derive_seed
from ..world.scenes import SceneSpec

FULL_CIRCLE_BEAMS = 360


def _wrap_array(a: np.ndarray) -> np.ndarray:
    return np.mod(a + math.pi, 2.0 * math.pi) - math.pi


# ---------------------------------------------------------------------------
# lidar
# ---------------------------------------------------------------------------

def lidar_plane_boxes(scene: SceneSpec, height: float) -> np.ndarray:
    """(B, 4) xy slabs of every solid that intersects the scan plane."""
    rows = []
    solids = list(scene.walls) + [o.box for o in scene.obstacles]
    if scene.table is not None:
        solids.append(scene.table)
    for b in solids:
        if b.lo[2] <= height <= b.hi[2]:
            rows.append([b.lo[0], b.lo[1], b.hi[0], b.hi[1]])
    return np.array(rows) if rows else np.zeros((0, 4))


def plane_boxes_from_array(boxes: np.ndarray, height: float) -> np.ndarray:
    """Same cut, but from packed (B, 6) world AABBs (live simulator state)."""
    boxes = np.asarray(boxes, dtype=np.float64)
    keep = (boxes[:, 2] <= height) & (boxes[:, 5] >= height)
    return boxes[keep][:, [0, 1, 3, 4]]


def simulate_lidar(scene_or_boxes, pose, cfg: BaselineConfig | None = None) -> np.ndarray:
    """360-beam planar range scan; beam k points at heading + k degrees.

    Readings are capped at max range; a max reading means no return."""
    cfg = cfg or BaselineConfig()
    if isinstance(scene_or_boxes, SceneSpec):
        slabs = lidar_plane_boxes(scene_or_boxes, cfg.lidar_height)
    else:
        slabs = np.asarray(scene_or_boxes, dtype=np.float64)
    if isinstance(pose, Pose2):
        px, py, th = pose.x, pose.y, pose.theta
    else:
        px, py, th = float(pose[0]), float(pose[1]), float(pose[2])
    ang = th + np.arange(cfg.lidar_beams) * (2.0 * math.pi / cfg.lidar_beams)
    d = np.stack([np.cos(ang), np.sin(ang)], axis=1)  # (K, 2)
    if slabs.shape[0] == 0:
        return np.full(cfg.lidar_beams, cfg.lidar_max_range)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d                                  # (K, 2)
        t_lo = (slabs[None, :, 0:2] - (px, py)) * inv[:, None, :]
        t_hi = (slabs[None, :, 2:4] - (px, py)) * inv[:, None, :]
    near = np.nan_to_num(np.fmin(t_lo, t_hi), nan=-np.inf).max(axis=2)
    far = np.nan_to_num(np.fmax(t_lo, t_hi), nan=np.inf).min(axis=2)
    entry = np.maximum(near, 0.0)                      # origin inside box -> 0
    hit = (far >= entry) & (far >= 0.0)
    dist = np.where(hit, entry, np.inf).min(axis=1)
    return np.minimum(dist, cfg.lidar_max_range)


# ---------------------------------------------------------------------------
# occupancy grid
# ---------------------------------------------------------------------------

@dataclass
class OccupancyGrid:
    """Axis-aligned log-odds grid; cell (ix, iy) covers
    [x0 + ix*res, x0 + (ix+1)*res) x [y0 + iy*res, ...)."""

    resolution: float
    origin: Pose2
    log_odds: np.ndarray  # (ny, nx)

    CLAMP = 10.0

    @classmethod
    def from_bounds(cls, x_lo, y_lo, x_hi, y_hi, resolution=0.05) -> "OccupancyGrid":
        nx = max(1, int(math.ceil((x_hi - x_lo) / resolution)))
        ny = max(1, int(math.ceil((y_hi - y_lo) / resolution)))
        return cls(resolution=resolution, origin=Pose2(x_lo, y_lo, 0.0),
                   log_odds=np.zeros((ny, nx)))

    @classmethod
    def for_scene(cls, scene: SceneSpec, resolution=0.05, margin=0.3) -> "OccupancyGrid":
        solids = scene.solid_boxes()
        x_lo = min(solids[:, 0].min(), 0.0) - margin
        y_lo = min(solids[:, 1].min(), 0.0) - margin
        x_hi = max(solids[:, 3].max(), scene.goal[0]) + margin
        y_hi = max(solids[:, 4].max(), scene.goal[1]) + margin
        return cls.from_bounds(x_lo, y_lo, x_hi, y_hi, resolution)

    @property
    def shape(self):
        return self.log_odds.shape

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor((x - self.origin.x) / self.resolution)),
                int(math.floor((y - self.origin.y) / self.resolution)))

    def cell_center(self, ix, iy):
        return (self.origin.x + (np.asarray(ix) + 0.5) * self.resolution,
                self.origin.y + (np.asarray(iy) + 0.5) * self.resolution)

    def in_bounds(self, ix: int, iy: int) -> bool:
        ny, nx = self.log_odds.shape
        return 0 <= ix < nx and 0 <= iy < ny

    def occupied(self) -> np.ndarray:
        return self.log_odds > 0.0

    def add(self, ix: int, iy: int, delta: float) -> None:
        if self.in_bounds(ix, iy):
            v = self.log_odds[iy, ix] + delta
            self.log_odds[iy, ix] = min(self.CLAMP, max(-self.CLAMP, v))

    def to_image(self) -> np.ndarray:
        """uint8 view, white free / black occupied / mid-gray unknown."""
        p = 1.0 / (1.0 + np.exp(-self.log_odds))
        return np.round(255.0 * (1.0 - p)).astype(np.uint8)[::-1, :]  # +y up

    def save(self, path_prefix: str) -> None:
        Image.fromarray(self.to_image()).save(path_prefix + ".png")
        with open(path_prefix + ".txt", "w") as f:
            f.write(f"resolution: {self.resolution}\n")
            f.write(f"origin: {self.origin.x} {self.origin.y} {self.origin.theta}\n")
            ny, nx = self.log_odds.shape
            f.write(f"size: {nx} {ny}\n")


def bresenham(ix0: int, iy0: int, ix1: int, iy1: int) -> list[tuple[int, int]]:
    """Integer line from (ix0, iy0) to (ix1, iy1), both endpoints included."""
    cells = []
    dx, dy = abs(ix1 - ix0), abs(iy1 - iy0)
    sx = 1 if ix0 < ix1 else -1
    sy = 1 if iy0 < iy1 else -1
    err = dx - dy
    x, y = ix0, iy0
    while True:
        cells.append((x, y))
        if x == ix1 and y == iy1:
            break
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy
    return cells


def integrate_scan(grid: OccupancyGrid, pose, ranges: np.ndarray,
                   cfg: BaselineConfig | None = None) -> None:
    """Log-odds update: free along each beam, occupied at real endpoints."""
    cfg = cfg or BaselineConfig()
    if isinstance(pose, Pose2):
        px, py, th = pose.x, pose.y, pose.theta
    else:
        px, py, th = float(pose[0]), float(pose[1]), float(pose[2])
    c0 = grid.world_to_cell(px, py)
    step = 2.0 * math.pi / len(ranges)
    for k, r in enumerate(ranges):
        a = th + k * step
        ex = px + r * math.cos(a)
        ey = py + r * math.sin(a)
        c1 = grid.world_to_cell(ex, ey)
        cells = bresenham(c0[0], c0[1], c1[0], c1[1])
        is_hit = r < cfg.lidar_max_range - 1e-9
        for ix, iy in cells[:-1]:
            grid.add(ix, iy, cfg.logodds_free)
        if is_hit:
            grid.add(cells[-1][0], cells[-1][1], cfg.logodds_hit)
        else:
            grid.add(cells[-1][0], cells[-1][1], cfg.logodds_free)


def scripted_tour(scene: SceneSpec, cfg: BaselineConfig | None = None,
                  clearance: float = 0.3) -> list[Pose2]:
    """Serpentine survey of the reachable free space, replacing teleoperation.

    Waypoints are sampled on a `tour_spacing` lattice restricted to cells
    reachable from the start with the given clearance, ordered in a
    lawnmower sweep along +x with alternating y direction."""
    cfg = cfg or BaselineConfig()
    res = 0.1
    grid = OccupancyGrid.for_scene(scene, resolution=res, margin=0.0)
    slabs = lidar_plane_boxes(scene, cfg.lidar_height)
    ny, nx = grid.shape
    xs, ys = grid.cell_center(np.arange(nx), np.arange(ny))
    occ = np.zeros((ny, nx), dtype=bool)
    for x0, y0, x1, y1 in slabs:
        cx = (xs >= x0 - 1e-9) & (xs <= x1 + 1e-9)
        cy = (ys >= y0 - 1e-9) & (ys <= y1 + 1e-9)
        occ |= cy[:, None] & cx[None, :]
    dist = ndimage.distance_transform_edt(~occ) * res
    open_space = dist > clearance
    labels, _ = ndimage.label(open_space)
    sx, sy = grid.world_to_cell(0.0, 0.0)
    sx = min(max(sx, 0), nx - 1)
    sy = min(max(sy, 0), ny - 1)
    home = labels[sy, sx]
    if home == 0:
        return [Pose2(0.0, 0.0, 0.0)]
    reach = labels == home
    stride = max(1, int(round(cfg.tour_spacing / res)))
    pts = []
    for col_i, ix in enumerate(range(0, nx, stride)):
        rows = [iy for iy in range(0, ny, stride) if reach[iy, ix]]
        if col_i % 2 == 1:
            rows.reverse()
        pts.extend((ix, iy) for iy in rows)
    if not pts:
        pts = [(sx, sy)]
    tour = []
    for k, (ix, iy) in enumerate(pts):
        x, y = grid.cell_center(ix, iy)
        if k + 1 < len(pts):
            nx_, ny_ = grid.cell_center(*pts[k + 1])
            th = math.atan2(ny_ - y, nx_ - x)
        else:
            th = tour[-1].theta if tour else 0.0
        tour.append(Pose2(float(x), float(y), th))
    return tour


def build_map(scene: SceneSpec, tour: list[Pose2] | None = None,
              cfg: BaselineConfig | None = None) -> OccupancyGrid:
    """Survey the scene from every tour pose into one log-odds grid."""
    cfg = cfg or BaselineConfig()
    if tour is None:
        tour = scripted_tour(scene, cfg)
    grid = OccupancyGrid.for_scene(scene, resolution=cfg.grid_resolution)
    for pose in tour:
        scan = simulate_lidar(scene, pose, cfg)
        integrate_scan(grid, pose, scan, cfg)
    return grid


# ---------------------------------------------------------------------------
# Monte Carlo localization
# ---------------------------------------------------------------------------

@dataclass
class ParticleSet:
    poses: np.ndarray    # (N, 3) x, y, theta
    weights: np.ndarray  # (N,), sums to 1

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        s = self.weights.sum()
        if not (s > 0.0 and np.isfinite(s)):
            raise ValueError("particle weights must have positive finite sum")
        self.weights = self.weights / s

    @property
    def n(self) -> int:
        return self.poses.shape[0]


def init_particles_at(pose, n: int, rng, spread_xy=0.05, spread_theta=0.05) -> ParticleSet:
    if isinstance(pose, Pose2):
        pose = (pose.x, pose.y, pose.theta)
    poses = np.tile(np.asarray(pose, dtype=np.float64), (n, 1))
    poses[:, 0:2] += rng.normal(scale=spread_xy, size=(n, 2))
    poses[:, 2] += rng.normal(scale=spread_theta, size=n)
    return ParticleSet(poses, np.full(n, 1.0 / n))


def init_particles_uniform(grid: OccupancyGrid, n: int, rng) -> ParticleSet:
    """Uniform over observed free cells (fallback when tracking is lost)."""
    free = grid.log_odds < 0.0
    iy, ix = np.nonzero(free)
    if len(ix) == 0:
        iy, ix = np.nonzero(np.ones_like(free))
    pick = rng.integers(len(ix), size=n)
    x, y = grid.cell_center(ix[pick], iy[pick])
    poses = np.stack([x + rng.uniform(0, grid.resolution, n),
                      y + rng.uniform(0, grid.resolution, n),
                      rng.uniform(-math.pi, math.pi, n)], axis=1)
    return ParticleSet(poses, np.full(n, 1.0 / n))


class LikelihoodField:
    """Distance-to-nearest-occupied lookup for scan matching."""

    def __init__(self, grid: OccupancyGrid):
        self.grid = grid
        occ = grid.occupied()
        if occ.any():
            self.dist = ndimage.distance_transform_edt(~occ) * grid.resolution
        else:
            self.dist = np.full(grid.shape, 10.0)
        self.out_value = float(self.dist.max()) if occ.any() else 10.0

    def lookup(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        g = self.grid
        ix = np.floor((x - g.origin.x) / g.resolution).astype(int)
        iy = np.floor((y - g.origin.y) / g.resolution).astype(int)
        ny, nx = g.shape
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        out = np.full(x.shape, self.out_value)
        out[inside] = self.dist[iy[inside], ix[inside]]
        return out


def systematic_resample(particles: ParticleSet, rng) -> ParticleSet:
    n = particles.n
    positions = (rng.random() + np.arange(n)) / n
    idx = np.searchsorted(np.cumsum(particles.weights), positions)
    idx = np.minimum(idx, n - 1)
    return ParticleSet(particles.poses[idx].copy(), np.full(n, 1.0 / n))


def mcl_update(particles: ParticleSet, odom_delta, scan: np.ndarray,
               grid: OccupancyGrid, rng, cfg: BaselineConfig | None = None,
               field: LikelihoodField | None = None) -> ParticleSet:
    """One predict/weight/resample cycle.

    odom_delta = (dx, dy, dtheta) in the previous body frame.  Weights are
    multiplied by a likelihood-field match over subsampled beams; degenerate
    (all-zero) weights trigger a uniform re-initialization in free space."""
    cfg = cfg or BaselineConfig()
    if field is None:
        field = LikelihoodField(grid)
    n = particles.n
    dx, dy, dth = (float(v) for v in odom_delta)
    noise = rng.normal(size=(n, 3)) * (cfg.mcl_odom_sigma_xy,
                                       cfg.mcl_odom_sigma_xy,
                                       cfg.mcl_odom_sigma_theta)
    th = particles.poses[:, 2]
    poses = particles.poses.copy()
    poses[:, 0] += (dx + noise[:, 0]) * np.cos(th) - (dy + noise[:, 1]) * np.sin(th)
    poses[:, 1] += (dx + noise[:, 0]) * np.sin(th) + (dy + noise[:, 1]) * np.cos(th)
    poses[:, 2] = _wrap_array(th + dth + noise[:, 2])

    stride = max(1, len(scan) // cfg.mcl_scan_beams)
    beam_idx = np.arange(0, len(scan), stride)[:cfg.mcl_scan_beams]
    r = np.asarray(scan)[beam_idx]
    valid = r < cfg.lidar_max_range - 1e-9
    log_w = np.log(particles.weights + 1e-300)
    if valid.any():
        r = r[valid]
        ang = poses[:, 2:3] + beam_idx[valid] * (2.0 * math.pi / len(scan))
        ex = poses[:, 0:1] + r * np.cos(ang)
        ey = poses[:, 1:2] + r * np.sin(ang)
        d = field.lookup(ex, ey)
        log_w = log_w + (-0.5 * (d / cfg.mcl_scan_sigma) ** 2).sum(axis=1)
    log_w -= log_w.max()
    w = np.exp(log_w)
    s = w.sum()
    if not (s > 0.0 and np.isfinite(s)):
        return init_particles_uniform(grid, n, rng)
    w = w / s
    out = ParticleSet(poses, w)
    ess = 1.0 / (w ** 2).sum()
    if ess < 0.5 * n:
        out = systematic_resample(out, rng)
    return out


def estimate_pose(particles: ParticleSet) -> Pose2:
    w = particles.weights
    x = float(w @ particles.poses[:, 0])
    y = float(w @ particles.poses[:, 1])
    th = math.atan2(float(w @ np.sin(particles.poses[:, 2])),
                    float(w @ np.cos(particles.poses[:, 2])))
    return Pose2(x, y, th)


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------

def _inflated_blocked(grid: OccupancyGrid, inflate: float) -> np.ndarray:
    occ = grid.occupied()
    if not occ.any():
        return occ
    dist = ndimage.distance_transform_edt(~occ) * grid.resolution
    # EDT measures center-to-center; occupied centers sit up to half a cell
    # inside the true surface, so pad the radius by half a cell
    return dist <= inflate + 0.5 * grid.resolution


def _line_free(blocked: np.ndarray, a, b) -> bool:
    for ix, iy in bresenham(a[0], a[1], b[0], b[1]):
        if blocked[iy, ix]:
            return False
    return True


# soft proximity cost: paths prefer to stay this far from obstacles where
# the corridor allows it, which keeps corner apexes clear of the footprint's
# worst-heading bounding box without making narrow gaps unplannable
PENALTY_RADIUS = 0.50
PENALTY_WEIGHT = 6.0


def plan_astar(grid: OccupancyGrid, start, goal,
               cfg: BaselineConfig | None = None,
               inflate: float | None = None,
               shortcut_clearance: float | None = None) -> list[Pose2] | None:
    """8-connected A* on the inflated grid, then line-of-sight shortcutting.

    start/goal are world (x, y); returns None when unreachable.  Hard
    blocking uses the nominal robot radius; a soft cost pushes the path away
    from obstacles, and shortcuts are only taken where the straight line
    keeps `shortcut_clearance` so they cannot re-hug convex corners."""
    import heapq

    cfg = cfg or BaselineConfig()
    inflate = cfg.inflate_radius if inflate is None else inflate
    occ = grid.occupied()
    res = grid.resolution
    if occ.any():
        dist_m = ndimage.distance_transform_edt(~occ) * res
    else:
        dist_m = np.full(grid.shape, np.inf)
    blocked = dist_m <= inflate + 0.5 * res
    penalty = np.maximum(0.0, 1.0 - dist_m / PENALTY_RADIUS) ** 2
    ny, nx = blocked.shape
    s = grid.world_to_cell(float(start[0]), float(start[1]))
    g = grid.world_to_cell(float(goal[0]), float(goal[1]))
    for c in (s, g):
        if not (0 <= c[0] < nx and 0 <= c[1] < ny) or blocked[c[1], c[0]]:
            return None
    moves = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
             (1, 1, math.sqrt(2)), (1, -1, math.sqrt(2)),
             (-1, 1, math.sqrt(2)), (-1, -1, math.sqrt(2))]
    dist = {s: 0.0}
    came = {}
    h0 = math.hypot(g[0] - s[0], g[1] - s[1])
    heap = [(h0, 0.0, s)]
    found = False
    while heap:
        f, d, c = heapq.heappop(heap)
        if c == g:
            found = True
            break
        if d > dist.get(c, math.inf):
            continue
        for mx, my, mc in moves:
            nxt = (c[0] + mx, c[1] + my)
            if not (0 <= nxt[0] < nx and 0 <= nxt[1] < ny):
                continue
            if blocked[nxt[1], nxt[0]]:
                continue
            nd = d + mc * (1.0 + PENALTY_WEIGHT * penalty[nxt[1], nxt[0]])
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                came[nxt] = c
                h = math.hypot(g[0] - nxt[0], g[1] - nxt[1])
                heapq.heappush(heap, (nd + h, nd, nxt))
    if not found:
        return None
    cells = [g]
    while cells[-1] != s:
        cells.append(came[cells[-1]])
    cells.reverse()
    # greedy shortcutting: jump to the farthest vertex whose connecting line
    # keeps the shortcut clearance (fall back to the raw grid path where the
    # corridor is tighter than that)
    sc = inflate if shortcut_clearance is None else shortcut_clearance
    # full-cell margin: EDT measures from occupied cell centers, which sit up
    # to half a cell inside the true surface, and the line rasterization
    # samples cell centers too
    tight = dist_m <= sc + res
    short = [cells[0]]
    i = 0
    while i < len(cells) - 1:
        j = len(cells) - 1
        while j > i + 1 and not _line_free(tight, cells[i], cells[j]):
            j -= 1
        short.append(cells[j])
        i = j
    path = []
    for k, (ix, iy) in enumerate(short):
        x, y = grid.cell_center(ix, iy)
        if k + 1 < len(short):
            x2, y2 = grid.cell_center(*short[k + 1])
            th = math.atan2(y2 - y, x2 - x)
        else:
            th = path[-1].theta if path else 0.0
        path.append(Pose2(float(x), float(y), th))
    return path


# ---------------------------------------------------------------------------
# tracking
# ---------------------------------------------------------------------------

def track_path(path: list[Pose2], est_pose: Pose2, model: RobotModel,
               cfg: BaselineConfig | None = None,
               speed_scale: float = 1.0) -> Action:
    """Pure pursuit toward a lookahead point, arm stowed, camera untouched.

    Cruise speed drops with bearing error so turns happen mostly in place.
    speed_scale < 1 tightens tracking: w is bearing proportional, so curvature
    per meter of travel grows as v shrinks."""
    cfg = cfg or BaselineConfig()
    if not path:
        raise ValueError("track_path requires a nonempty path")
    pts = np.array([[p.x, p.y] for p in path])
    pos = np.array([est_pose.x, est_pose.y])
    if len(pts) == 1:
        target = pts[0]
    else:
        # project onto the polyline, then walk `lookahead` meters further
        seg = pts[1:] - pts[:-1]
        seg_len = np.linalg.norm(seg, axis=1)
        seg_len = np.where(seg_len < 1e-12, 1e-12, seg_len)
        t = ((pos - pts[:-1]) * seg).sum(axis=1) / seg_len ** 2
        t = np.clip(t, 0.0, 1.0)
        proj = pts[:-1] + t[:, None] * seg
        k = int(np.argmin(((proj - pos) ** 2).sum(axis=1)))
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        s_target = cum[k] + t[k] * seg_len[k] + cfg.lookahead
        if s_target >= cum[-1]:
            target = pts[-1]
        else:
            j = int(np.searchsorted(cum, s_target, side="right")) - 1
            frac = (s_target - cum[j]) / seg_len[j]
            target = pts[j] + frac * seg[j]
    bearing = wrap_angle(math.atan2(target[1] - est_pose.y,
                                    target[0] - est_pose.x) - est_pose.theta)
    # speed collapses quickly with heading error (zero past 45 degrees) so
    # corners are pivoted through rather than cut from inside
    v = cfg.cruise_speed * max(0.0, math.cos(2.0 * bearing)) * speed_scale
    w = float(np.clip(2.0 * bearing, -model.base_ang_vel_max,
                      model.base_ang_vel_max))
    a_robot = np.zeros(8)
    a_robot[0] = v
    a_robot[1] = w
    a_robot[2 + LIFT] = cfg.stow_lift
    a_robot[2 + EXTENSION] = model.joint_lo[EXTENSION]
    a_robot[2 + GRIPPER] = model.joint_lo[GRIPPER]
    return Action(a_robot=a_robot, a_cam=np.zeros(2))


# ---------------------------------------------------------------------------
# end-to-end episode
# ---------------------------------------------------------------------------

def classical_episode(scene: SceneSpec, config, seed: int = 0, *,
                      exec_scene: SceneSpec | None = None,
                      grid: OccupancyGrid | None = None,
                      replan: bool | None = None) -> dict:
    """Map (static scene), localize, plan once, track.  Returns episode stats.

    exec_scene lets the world diverge from what was mapped (dynamic
    obstacles appear only at execution time)."""
    from ..world import VecEnv

    cfg = config.baseline
    rng = np.random.default_rng(derive_seed(seed, 0xC1A55))
    if replan is None:
        replan = cfg.replan
    if grid is None:
        grid = build_map(scene, scripted_tour(scene, cfg), cfg)
    field = LikelihoodField(grid)
    env = VecEnv([exec_scene or scene], task="nav", num_envs=1, config=config,
                 seed=seed, auto_reset=False)
    model = env.model
    true0 = env.base[0]
    particles = init_particles_at(true0, cfg.mcl_particles, rng)
    # the simulator's footprint collision box is a heading-dependent AABB
    # whose circumradius exceeds the nominal radius; shortcuts must keep
    # that much clearance or corner apexes clip the box at diagonal headings
    safe_r = max(cfg.inflate_radius,
                 0.5 * model.footprint_diagonal * math.sqrt(2.0))
    path = plan_astar(grid, true0[0:2], scene.goal[0:2], cfg,
                      shortcut_clearance=safe_r)
    if path is None:
        return {"success": False, "steps": 0, "done_reason": 0,
                "planned": False, "final_goal_dist": float(np.linalg.norm(
                    true0[0:2] - scene.goal[0:2])), "loc_error": 0.0}
    # clearance field for speed scheduling: pure pursuit is geometric, so
    # slowing down in pinch zones tightens lateral convergence per meter
    occ = grid.occupied()
    if occ.any():
        clear_m = ndimage.distance_transform_edt(~occ) * grid.resolution
    else:
        clear_m = np.full(grid.shape, np.inf)
    ny_, nx_ = clear_m.shape

    def _clearance(x: float, y: float) -> float:
        ix, iy = grid.world_to_cell(x, y)
        if 0 <= ix < nx_ and 0 <= iy < ny_:
            return float(clear_m[iy, ix])
        return cfg.lidar_max_range
    prev_true = true0.copy()
    steps = 0
    reason = 0
    loc_err = 0.0
    while True:
        true = env.base[0]
        # exact odometry in the body frame; MCL adds its own diffusion
        c, s_ = math.cos(prev_true[2]), math.sin(prev_true[2])
        wx, wy = true[0] - prev_true[0], true[1] - prev_true[1]
        delta = (c * wx + s_ * wy, -s_ * wx + c * wy,
                 wrap_angle(true[2] - prev_true[2]))
        scan = simulate_lidar(
            plane_boxes_from_array(env.solid[0][:env.solid_counts[0]],
                                   cfg.lidar_height), true, cfg)
        particles = mcl_update(particles, delta, scan, grid, rng, cfg, field)
        est = estimate_pose(particles)
        loc_err = math.hypot(est.x - true[0], est.y - true[1])
        if replan and steps % 20 == 0 and steps > 0:
            newp = plan_astar(grid, (est.x, est.y), scene.goal[0:2], cfg)
            if newp is not None:
                path = newp
        ahead = _clearance(est.x + 0.4 * math.cos(est.theta),
                           est.y + 0.4 * math.sin(est.theta))
        near = min(_clearance(est.x, est.y), ahead)
        scale = float(np.clip(near / (2.0 * safe_r), 1.0 / 3.0, 1.0))
        act = track_path(path, est, model, cfg, speed_scale=scale)
        prev_true = true.copy()
        _, dones, info = env.step(act.as_commands()[None, :])
        steps += 1
        if dones[0]:
            reason = int(info["done_reason"][0])
            break
        if steps >= config.episode.timeout_steps + 1:
            reason = 3
            break
    return {"success": reason == 1, "steps": steps, "done_reason": reason,
            "planned": True,
            "final_goal_dist": float(np.linalg.norm(
                env.base[0, 0:2] - scene.goal[0:2])),
            "loc_error": loc_err}

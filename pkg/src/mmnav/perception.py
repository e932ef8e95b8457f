"""Sensing: scandot masking, depth rendering, depth noise and cleanup.

Scandots are the corner points of scene boxes.  The masking function keeps a
point when, expressed in the camera frame (x = optical axis, y left, z up),
it has positive depth, lies inside the angular field of view and is within
the visibility range; there is no occlusion test.  Observations hand the
surviving points to the policy in the robot base frame.

Depth images are ray-cast against the same boxes: one ray per pixel on a
grid uniform in tangent space, value = Euclidean distance along the ray,
zero = no return.  Pixel (0, 0) is the top-left corner; rows scan downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import CameraConfig
from .geom import Pose3, quat_rotate, quat_to_matrix
from .robot import RobotModel, RobotState, fk_camera

DEG = math.pi / 180.0


@dataclass(frozen=True)
class CameraIntrinsics:
    hfov: float = 87.0 * DEG
    vfov: float = 58.0 * DEG
    width: int = 87
    height: int = 58
    max_range: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.hfov < math.pi or not 0.0 < self.vfov < math.pi:
            raise ValueError("field of view must be in (0, pi)")
        if self.width < 8 or self.height < 8:
            raise ValueError("resolution must be at least 8x8")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    @classmethod
    def from_config(cls, cfg: CameraConfig) -> "CameraIntrinsics":
        return cls(hfov=cfg.hfov_deg * DEG, vfov=cfg.vfov_deg * DEG,
                   width=cfg.width, height=cfg.height, max_range=cfg.max_range)

    def ray_grid(self) -> np.ndarray:
        """(H, W, 3) unit ray directions in the camera frame."""
        th = math.tan(0.5 * self.hfov)
        tv = math.tan(0.5 * self.vfov)
        u = (np.arange(self.width) + 0.5 - 0.5 * self.width) / (0.5 * self.width) * th
        v = (0.5 * self.height - np.arange(self.height) - 0.5) / (0.5 * self.height) * tv
        dirs = np.empty((self.height, self.width, 3))
        dirs[:, :, 0] = 1.0
        dirs[:, :, 1] = -u[None, :]   # columns increase to the right (-y)
        dirs[:, :, 2] = v[:, None]    # rows increase downward (-z)
        return dirs / np.linalg.norm(dirs, axis=2, keepdims=True)


@dataclass(frozen=True)
class Scandots:
    """Corner observations for one scene's boxes, in the robot base frame."""

    obstacle_ids: np.ndarray   # (B,) indices into the scene's solid boxes
    corners: np.ndarray        # (B, 8, 3) base-frame corner positions
    mask: np.ndarray           # (B, 8) visibility of each corner

    def visible_points(self) -> np.ndarray:
        return self.corners[self.mask]


# ---------------------------------------------------------------------------
# visibility masking
# ---------------------------------------------------------------------------

def visible_mask_cam(pts_cam: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Frustum-and-range mask for camera-frame points (..., 3) -> (...)."""
    x = pts_cam[..., 0]
    y = pts_cam[..., 1]
    z = pts_cam[..., 2]
    # |atan2(y, x)| <= hfov/2 is |y| <= x tan(hfov/2) when x > 0
    inside = (x > 0.0)
    inside &= np.abs(y) <= x * math.tan(0.5 * intr.hfov) + 1e-15
    inside &= np.abs(z) <= x * math.tan(0.5 * intr.vfov) + 1e-15
    inside &= x * x + y * y + z * z <= intr.max_range ** 2 + 1e-12
    return inside


def visible_mask(points, cam: Pose3, intr: CameraIntrinsics) -> np.ndarray:
    """World-frame points (..., 3) -> visibility booleans (...)."""
    pts = np.asarray(points, dtype=np.float64)
    rot = quat_to_matrix(cam.orientation)
    rel = (pts - cam.position) @ rot  # row-vector form of R^T (p - t)
    return visible_mask_cam(rel, intr)


def visible_mask_arrays(points: np.ndarray, cam_pos: np.ndarray,
                        cam_rot: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Batched mask: points (N, P, 3), cam_pos (N, 3), cam_rot (N, 3, 3)."""
    rel = np.einsum("npj,nji->npi", points - cam_pos[:, None, :], cam_rot)
    return visible_mask_cam(rel, intr)


def points_to_base(points: np.ndarray, base: np.ndarray) -> np.ndarray:
    """World points (N, P, 3) into each base frame given base rows (N, 3)."""
    rel = points.copy()
    rel[..., 0] -= base[:, None, 0]
    rel[..., 1] -= base[:, None, 1]
    ct = np.cos(base[:, 2])[:, None]
    st = np.sin(base[:, 2])[:, None]
    out = np.empty_like(rel)
    out[..., 0] = ct * rel[..., 0] + st * rel[..., 1]
    out[..., 1] = -st * rel[..., 0] + ct * rel[..., 1]
    out[..., 2] = rel[..., 2]
    return out


def mask_scandots(scene, robot_state: RobotState, intr: CameraIntrinsics,
                  model: RobotModel | None = None) -> Scandots:
    """Per-corner visibility of every solid box, corners in the base frame."""
    model = model or RobotModel()
    solid = scene.solid_boxes()
    if solid.shape[0] == 0:
        return Scandots(np.zeros(0, dtype=np.int64), np.zeros((0, 8, 3)),
                        np.zeros((0, 8), dtype=bool))
    from .geom import boxes_corners

    corners = boxes_corners(solid)  # (B, 8, 3)
    cam = fk_camera(model, robot_state)
    mask = visible_mask(corners.reshape(-1, 3), cam, intr).reshape(-1, 8)
    base = np.array([[robot_state.base.x, robot_state.base.y, robot_state.base.theta]])
    in_base = points_to_base(corners.reshape(1, -1, 3), base)[0].reshape(-1, 8, 3)
    return Scandots(np.arange(solid.shape[0]), in_base, mask)


def mask_object(o_t, robot_state: RobotState, intr: CameraIntrinsics,
                model: RobotModel | None = None):
    """Object position in the base frame when visible, else None."""
    model = model or RobotModel()
    cam = fk_camera(model, robot_state)
    o = np.asarray(o_t, dtype=np.float64)
    if not bool(visible_mask(o[None, :], cam, intr)[0]):
        return None
    base = np.array([[robot_state.base.x, robot_state.base.y, robot_state.base.theta]])
    return points_to_base(o[None, None, :], base)[0, 0]


# ---------------------------------------------------------------------------
# depth rendering
# ---------------------------------------------------------------------------

def _slab_depths(origins: np.ndarray, dirs: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Entry distances: origins (N, 3), dirs (N, R, 3), boxes (N, B, 6)
    -> (N, R) nearest hit (inf = miss).  Inside a box maps to 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs  # inf where a component is 0; slab logic absorbs NaN below
        t0 = (boxes[:, None, :, 0:3] - origins[:, None, None, :]) * inv[:, :, None, :]
        t1 = (boxes[:, None, :, 3:6] - origins[:, None, None, :]) * inv[:, :, None, :]
    tmin = np.fmin(t0, t1)  # fmin/fmax drop the NaN from 0 * inf
    tmax = np.fmax(t0, t1)
    near = np.nanmax(np.where(np.isnan(tmin), -np.inf, tmin), axis=3)
    far = np.nanmin(np.where(np.isnan(tmax), np.inf, tmax), axis=3)
    # parallel rays outside their slab: tmin/tmax are +-inf pairs handled above;
    # exactly-on-face parallel cases yield NaN in both and were replaced
    hit = (near <= far) & (far >= 0.0)
    entry = np.where(near < 0.0, 0.0, near)
    entry = np.where(hit, entry, np.inf)
    return entry.min(axis=2)


def render_depth_arrays(cam_pos: np.ndarray, cam_rot: np.ndarray,
                        boxes: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Batched renderer: (N, 3), (N, 3, 3), (N, B, 6) -> (N, H, W) depth."""
    n = cam_pos.shape[0]
    grid = intr.ray_grid().reshape(-1, 3)  # (R, 3) camera frame
    dirs = np.einsum("nij,rj->nri", cam_rot, grid)
    t = _slab_depths(cam_pos, dirs, boxes)
    t = np.where(np.isfinite(t) & (t <= intr.max_range), t, 0.0)
    return t.reshape(n, intr.height, intr.width)


def render_depth(scene, robot_state: RobotState, intr: CameraIntrinsics,
                 model: RobotModel | None = None) -> np.ndarray:
    """(H, W) depth image for one robot state; includes the pick object."""
    model = model or RobotModel()
    solid = scene.solid_boxes()
    if scene.object is not None:
        half = 0.5 * scene.object.size
        pos = scene.object.position
        solid = np.concatenate(
            [solid, np.concatenate([pos - half, pos + half])[None, :]], axis=0)
    base = np.array([[robot_state.base.x, robot_state.base.y, robot_state.base.theta]])
    pos, rot = model.camera_pose_arrays(base, robot_state.joints[None, :])
    if solid.shape[0] == 0:
        return np.zeros((intr.height, intr.width))
    return render_depth_arrays(pos, rot, solid[None, :, :], intr)[0]


# ---------------------------------------------------------------------------
# noise and cleanup
# ---------------------------------------------------------------------------

def corrupt_depth(d: np.ndarray, rng: np.random.Generator, *,
                  noise_sigma: float = 0.02, salt_prob: float = 0.02,
                  edge_range: float = 0.1, edge_drop_prob: float = 0.3) -> np.ndarray:
    """Sensor-style corruption: multiplicative noise, dropout, edge dropout.

    Noise never creates returns (zeros stay zero) and corrupted values are
    clipped to stay positive.
    """
    out = np.asarray(d, dtype=np.float64).copy()
    valid = out > 0
    if noise_sigma > 0:
        out[valid] *= 1.0 + noise_sigma * rng.standard_normal(int(valid.sum()))
        out[valid] = np.maximum(out[valid], 1e-4)
    if edge_drop_prob > 0:
        spread = ndimage.maximum_filter(out, size=3) - ndimage.minimum_filter(out, size=3)
        edges = valid & (spread > edge_range)
        drop = edges & (rng.random(out.shape) < edge_drop_prob)
        out[drop] = 0.0
    if salt_prob > 0:
        out[valid & (rng.random(out.shape) < salt_prob)] = 0.0
    return out


def fill_holes(d: np.ndarray, radius: int = 2) -> np.ndarray:
    """Nearest valid neighbor along each row within `radius` pixels.

    Scans left-to-right then right-to-left and keeps the closer donor, so an
    isolated hole between valid pixels takes its nearest side's value.
    """
    h, w = d.shape
    out = d.copy()
    valid = d > 0
    cols = np.arange(w)
    # distance (in columns) to the most recent valid pixel on each side
    left_val = np.zeros((h, w))
    left_dist = np.full((h, w), np.inf)
    last_val = np.zeros(h)
    last_col = np.full(h, -np.inf)
    for c in range(w):
        last_val = np.where(valid[:, c], d[:, c], last_val)
        last_col = np.where(valid[:, c], c, last_col)
        left_val[:, c] = last_val
        left_dist[:, c] = c - last_col
    right_val = np.zeros((h, w))
    right_dist = np.full((h, w), np.inf)
    last_val = np.zeros(h)
    last_col = np.full(h, np.inf)
    for c in range(w - 1, -1, -1):
        last_val = np.where(valid[:, c], d[:, c], last_val)
        last_col = np.where(valid[:, c], c, last_col)
        right_val[:, c] = last_val
        right_dist[:, c] = last_col - c
    use_left = left_dist <= right_dist
    donor = np.where(use_left, left_val, right_val)
    dist = np.where(use_left, left_dist, right_dist)
    fill = (~valid) & (dist <= radius)
    out[fill] = donor[fill]
    return out


class DepthCleaner:
    """Streaming cleanup: row hole filling then a short-memory EMA.

    The EMA (weight 0.5 on the newest frame) updates wherever the incoming
    frame is valid; pixels with no valid sample in the last `memory` frames
    decay back to invalid.
    """

    def __init__(self, alpha: float = 0.5, memory: int = 3, fill_radius: int = 2):
        self.alpha = alpha
        self.memory = memory
        self.fill_radius = fill_radius
        self.ema: np.ndarray | None = None
        self.age: np.ndarray | None = None

    def push(self, d: np.ndarray) -> np.ndarray:
        filled = fill_holes(np.asarray(d, dtype=np.float64), self.fill_radius)
        valid = filled > 0
        if self.ema is None:
            self.ema = filled.copy()
            self.age = np.where(valid, 0, self.memory)
        else:
            self.age = np.where(valid, 0, self.age + 1)
            self.ema = np.where(valid & (self.ema > 0),
                                self.alpha * filled + (1 - self.alpha) * self.ema,
                                np.where(valid, filled, self.ema))
        out = np.where(self.age < self.memory, self.ema, 0.0)
        return out


def save_depth_png(d: np.ndarray, path) -> None:
    """16-bit grayscale, millimeter quantization."""
    from PIL import Image

    mm = np.clip(np.round(np.asarray(d, dtype=np.float64) * 1000.0), 0, 65535)
    Image.fromarray(mm.astype(np.uint16)).save(path)


def load_depth_png(path) -> np.ndarray:
    from PIL import Image

    arr = np.asarray(Image.open(path), dtype=np.float64)
    return arr / 1000.0

"""Pure geometric kernel: vectors, planar/spatial poses, axis-aligned boxes,
rays and frustum-support math used by every other module.

Conventions
-----------
* World frame: x forward, y left, z up (right-handed), meters/radians.
* Quaternions are (w, x, y, z), unit norm.
* Boxes are axis-aligned, stored as ``lo``/``hi`` corners; the packed array
  form used in hot paths is ``(..., 6)`` with ``[lo, hi]`` concatenated.
* All functions are pure; everything is safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Vec3 = np.ndarray  # shape (3,), float


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=np.float64)


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    t = math.fmod(theta, 2.0 * math.pi)
    if t > math.pi:
        t -= 2.0 * math.pi
    elif t <= -math.pi:
        t += 2.0 * math.pi
    return t


# ---------------------------------------------------------------------------
# quaternions (w, x, y, z)
# ---------------------------------------------------------------------------

def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_from_axis_angle(axis: Vec3, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return quat_identity()
    half = 0.5 * angle
    q = np.empty(4)
    q[0] = math.cos(half)
    q[1:] = axis / n * math.sin(half)
    return q


def quat_from_yaw(yaw: float) -> np.ndarray:
    return quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: Vec3) -> Vec3:
    """Rotate vector v by quaternion q."""
    w, x, y, z = q
    u = np.array([x, y, z])
    return 2.0 * np.dot(u, v) * u + (w * w - np.dot(u, u)) * np.asarray(v) + 2.0 * w * np.cross(u, v)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose2:
    """Planar pose (x, y, heading); theta normalized to (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Pose3:
    """Rigid transform: rotation (unit quaternion, wxyz) then translation."""

    position: Vec3 = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        q = np.asarray(self.orientation, dtype=np.float64)
        n = np.linalg.norm(q)
        if not math.isfinite(n) or n < 1e-12:
            raise ValueError("orientation quaternion must have nonzero finite norm")
        if abs(n - 1.0) > 1e-9:
            q = q / n
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "orientation", q)


def transform_from_frame(p: Vec3, frame: Pose3) -> Vec3:
    """Express a point given in `frame` coordinates in the world frame."""
    return quat_rotate(frame.orientation, p) + frame.position


def transform_to_frame(p: Vec3, frame: Pose3) -> Vec3:
    """Express a world-frame point in the coordinates of `frame` (inverse transform)."""
    return quat_rotate(quat_conj(frame.orientation), np.asarray(p) - frame.position)


def points_to_frame(points: np.ndarray, frame: Pose3) -> np.ndarray:
    """Vectorized transform_to_frame for an (..., 3) array of points."""
    rot = quat_to_matrix(quat_conj(frame.orientation))
    return (np.asarray(points) - frame.position) @ rot.T


def pose2_to_frame_xy(points_xy: np.ndarray, pose: Pose2) -> np.ndarray:
    """Express (..., 2) world points in a planar base frame."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    d = np.asarray(points_xy) - np.array([pose.x, pose.y])
    return np.stack([d[..., 0] * c + d[..., 1] * s, -d[..., 0] * s + d[..., 1] * c], axis=-1)


# ---------------------------------------------------------------------------
# boxes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box3:
    """Axis-aligned box; lo <= hi componentwise."""

    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if np.any(lo > hi):
            raise ValueError(f"box lo > hi: {lo} vs {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> Vec3:
        return 0.5 * (self.lo + self.hi)

    @property
    def size(self) -> Vec3:
        return self.hi - self.lo

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.lo, self.hi])


def box_from_center(center: Vec3, size: Vec3) -> Box3:
    c = np.asarray(center, dtype=np.float64)
    h = 0.5 * np.asarray(size, dtype=np.float64)
    return Box3(c - h, c + h)


# Canonical corner order: bit i2 i1 i0 selects (x, y, z) between lo and hi,
# z varying fastest -> lexicographic from (lo,lo,lo) to (hi,hi,hi).
_CORNER_BITS = np.array(
    [[(i >> 2) & 1, (i >> 1) & 1, i & 1] for i in range(8)], dtype=np.float64
)


def box_corners(b: Box3) -> np.ndarray:
    """The 8 corners in canonical (min-to-max lexicographic) order, shape (8, 3)."""
    return b.lo + _CORNER_BITS * (b.hi - b.lo)


def boxes_corners(boxes: np.ndarray) -> np.ndarray:
    """Corners of packed boxes (..., 6) -> (..., 8, 3), canonical order."""
    boxes = np.asarray(boxes)
    lo = boxes[..., None, 0:3]
    hi = boxes[..., None, 3:6]
    return lo + _CORNER_BITS * (hi - lo)


def boxes_overlap(a: Box3, b: Box3) -> bool:
    """Closed-interval overlap: touching faces count as overlapping."""
    return bool(np.all(a.lo <= b.hi) and np.all(b.lo <= a.hi))


def boxes_overlap_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise overlap of packed boxes (..., 6) vs (..., 6), broadcasting."""
    a = np.asarray(a)
    b = np.asarray(b)
    return np.all(a[..., 0:3] <= b[..., 3:6], axis=-1) & np.all(b[..., 0:3] <= a[..., 3:6], axis=-1)


def boxes_overlap_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise overlap of packed boxes a (A, 6) against b (B, 6) -> (A, B)."""
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    return boxes_overlap_rows(a[:, None, :], b[None, :, :])


def boxes_gap_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean gap between packed boxes (0 when overlapping), broadcasting."""
    a = np.asarray(a)
    b = np.asarray(b)
    gap = np.maximum(a[..., 0:3] - b[..., 3:6], b[..., 0:3] - a[..., 3:6])
    gap = np.maximum(gap, 0.0)
    return np.sqrt(np.sum(gap * gap, axis=-1))


def box_distance(a: Box3, b: Box3) -> float:
    """Euclidean gap between two boxes; 0 when they overlap or touch."""
    return float(boxes_gap_rows(a.as_array(), b.as_array()))


# ---------------------------------------------------------------------------
# rays
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ray:
    """Origin plus unit direction."""

    origin: Vec3
    direction: Vec3

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if not math.isfinite(n) or n < 1e-12:
            raise ValueError("ray direction must have nonzero finite norm")
        if abs(n - 1.0) > 1e-9:
            d = d / n
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


def ray_box_intersect(r: Ray, b: Box3) -> float | None:
    """Smallest non-negative entry distance (slab method); 0 if the origin is
    inside the box; None on a miss."""
    t = rays_boxes_intersect(r.origin[None, :], r.direction[None, :], b.as_array()[None, :])[0, 0]
    return None if not np.isfinite(t) else float(t)


def rays_boxes_intersect(origins: np.ndarray, dirs: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Vectorized slab test.

    origins, dirs: (R, 3); boxes: (B, 6) packed.  Returns (R, B) entry
    distances clamped at 0 for inside-origins, +inf where the ray misses.
    """
    origins = np.asarray(origins, dtype=np.float64)[:, None, :]  # (R,1,3)
    boxes = np.asarray(boxes, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / np.asarray(dirs, dtype=np.float64)[:, None, :]  # (R,1,3)
        t1 = (boxes[None, :, 0:3] - origins) * inv
        t2 = (boxes[None, :, 3:6] - origins) * inv
    # A zero direction component gives t1/t2 = +-inf or NaN (origin on the
    # slab boundary); NaNs must not win the min/max, so patch them per side.
    lo_t = np.fmin(t1, t2)
    hi_t = np.fmax(t1, t2)
    # fmin/fmax propagate a value over NaN unless both are NaN; both NaN means
    # origin exactly on both slab planes of a degenerate axis -> treat as hit.
    lo_t = np.where(np.isnan(lo_t), -np.inf, lo_t)
    hi_t = np.where(np.isnan(hi_t), np.inf, hi_t)
    t_enter = np.max(lo_t, axis=-1)
    t_exit = np.min(hi_t, axis=-1)
    t = np.maximum(t_enter, 0.0)
    hit = (t_exit >= t) & np.isfinite(t)
    return np.where(hit, t, np.inf)

"""Observation builders: vectorized env state -> network inputs.

Every builder returns (proprio (N, 21) f32, perc, task (N, 3) f32) where
`perc` is whatever the policy's encoder consumes: a (points, mask) pair for
set encoders, a flat slot vector for the ablation encoder, a depth image
stack for the distilled student, or the raw masked-object vector for the
pick policy.  Builders with per-episode state (noise draws, depth history)
watch the env's episode counters and refresh themselves on reset.
"""

from __future__ import annotations

import numpy as np

from ..config import BaselineConfig
from ..perception import (CameraIntrinsics, DepthCleaner, corrupt_depth,
                          points_to_base, render_depth_arrays,
                          visible_mask_arrays, visible_mask_cam)
from ..seeding import derive_seed


def _corner_cloud(env):
    """World corners (N, P, 3) with a validity row mask from box counts."""
    corners = env.solid_corners()          # (N, B, 8, 3), padding far away
    n, b = corners.shape[0], corners.shape[1]
    pts = corners.reshape(n, b * 8, 3)
    real = (np.arange(b)[None, :] < env.solid_counts[:, None])
    return pts, np.repeat(real, 8, axis=1)


class ScandotObs:
    """Scandot observations for the navigation policies.

    masked=False: every corner within `max_range` of the camera (training
    the privileged teacher).  masked=True: corners additionally gated by the
    camera frustum, so what the policy sees depends on where it looks.
    """

    def __init__(self, env, *, masked: bool, intr: CameraIntrinsics | None = None,
                 max_range: float | None = None):
        self.env = env
        self.masked = masked
        self.intr = intr or CameraIntrinsics()
        if max_range is not None:
            self.intr = CameraIntrinsics(
                hfov=self.intr.hfov, vfov=self.intr.vfov, width=self.intr.width,
                height=self.intr.height, max_range=max_range)

    def points_and_mask(self):
        env = self.env
        pts, real = _corner_cloud(env)
        cam_pos, cam_rot = env.camera_poses()
        if self.masked:
            vis = visible_mask_arrays(pts, cam_pos, cam_rot, self.intr)
        else:
            d2 = ((pts - cam_pos[:, None, :]) ** 2).sum(axis=2)
            vis = d2 <= self.intr.max_range ** 2 + 1e-12
        vis &= real
        base_pts = points_to_base(pts, env.base)
        return base_pts.astype(np.float32), vis

    def __call__(self):
        pts, vis = self.points_and_mask()
        return (self.env.proprio().astype(np.float32), (pts, vis),
                self.env.goal_in_base().astype(np.float32))


class SlotObs:
    """Fixed-slot corner vectors for the flat-MLP ablation encoder.

    Boxes are kept in generation order; when more than `slots` boxes exist,
    the nearest ones (2D distance to the base) are kept.  Masked corners are
    zero-filled; empty slots stay zero.
    """

    def __init__(self, env, *, slots: int = 8, masked: bool = True,
                 intr: CameraIntrinsics | None = None):
        self.env = env
        self.slots = slots
        self.inner = ScandotObs(env, masked=masked, intr=intr)

    def __call__(self):
        env = self.env
        pts, vis = self.inner.points_and_mask()
        n, p = vis.shape
        b = p // 8
        corners = pts.reshape(n, b, 8, 3)
        cmask = vis.reshape(n, b, 8)
        centers = corners.mean(axis=2)
        d2 = centers[:, :, 0] ** 2 + centers[:, :, 1] ** 2
        d2 = np.where(np.arange(b)[None, :] < env.solid_counts[:, None], d2, np.inf)
        out = np.zeros((n, self.slots, 8, 3), dtype=np.float32)
        for i in range(n):
            keep = np.sort(np.argsort(d2[i], kind="stable")[:self.slots])
            keep = keep[np.isfinite(d2[i][keep])]
            sel = corners[i, keep] * cmask[i, keep][:, :, None]
            out[i, :len(keep)] = sel
        return (env.proprio().astype(np.float32),
                out.reshape(n, self.slots * 24),
                env.goal_in_base().astype(np.float32))


class MappingObs:
    """Unmasked scandots with systematic exteroceptive noise.

    Per step: additive Gaussian jitter.  Per episode: a constant position
    bias (direction uniform, magnitude up to bias_max) and a resampled
    obstacle dropout set.  Re-observing cannot undo the bias or dropout,
    which is the point of the baseline.
    """

    def __init__(self, env, *, seed: int, cfg: BaselineConfig | None = None,
                 intr: CameraIntrinsics | None = None):
        self.env = env
        self.cfg = cfg or BaselineConfig()
        self.inner = ScandotObs(env, masked=False, intr=intr)
        self.rng = np.random.default_rng(derive_seed(seed, 0x6D61700A))
        self.episode_marks = np.full(env.n, -1, dtype=np.int64)
        self.bias = np.zeros((env.n, 3))
        b = env.solid.shape[1]
        self.dropped = np.zeros((env.n, b), dtype=bool)

    def _refresh(self):
        env = self.env
        stale = env.episode_count != self.episode_marks
        for i in np.flatnonzero(stale):
            direction = self.rng.standard_normal(3)
            direction /= max(np.linalg.norm(direction), 1e-12)
            self.bias[i] = direction * self.rng.uniform(0.0, self.cfg.map_noise_bias)
            self.dropped[i] = self.rng.random(self.dropped.shape[1]) < self.cfg.map_dropout
            self.episode_marks[i] = env.episode_count[i]

    def __call__(self):
        self._refresh()
        pts, vis = self.inner.points_and_mask()
        n, p = vis.shape
        jitter = self.rng.standard_normal(pts.shape) * self.cfg.map_noise_sigma
        noisy = pts + (jitter + self.bias[:, None, :]).astype(np.float32)
        vis = vis & ~np.repeat(self.dropped, 8, axis=1)
        return (self.env.proprio().astype(np.float32), (noisy, vis),
                self.env.goal_in_base().astype(np.float32))


class PickObs:
    """Masked object position (+validity flag) and the initial position."""

    def __init__(self, env, intr: CameraIntrinsics | None = None):
        self.env = env
        self.intr = intr or CameraIntrinsics()

    def __call__(self):
        env = self.env
        o_t, o_i, _ = env.object_state()
        cam_pos, cam_rot = env.camera_poses()
        rel = np.einsum("nj,nji->ni", o_t - cam_pos, cam_rot)
        vis = visible_mask_cam(rel, self.intr)
        o_base = points_to_base(o_t[:, None, :], env.base)[:, 0, :]
        o_base[~vis] = 0.0
        perc = np.concatenate([o_base, vis[:, None].astype(np.float64)],
                              axis=1).astype(np.float32)
        task = points_to_base(o_i[:, None, :], env.base)[:, 0, :]
        return (env.proprio().astype(np.float32), perc, task.astype(np.float32))


class DepthObs:
    """Rendered, corrupted, cleaned depth for the distilled student.

    Holds one cleanup filter per env (reset on episode change) and a
    deterministic corruption stream derived from the seed.  ideal=True
    bypasses corruption and cleanup.
    """

    def __init__(self, env, *, seed: int, intr: CameraIntrinsics | None = None,
                 ideal: bool = False):
        self.env = env
        self.intr = intr or CameraIntrinsics()
        self.ideal = ideal
        self.rngs = [np.random.default_rng(derive_seed(seed, 0xD0_0000 + i))
                     for i in range(env.n)]
        self.cleaners = [DepthCleaner() for _ in range(env.n)]
        self.episode_marks = np.full(env.n, -1, dtype=np.int64)

    def render_raw(self) -> np.ndarray:
        cam_pos, cam_rot = self.env.camera_poses()
        return render_depth_arrays(cam_pos, cam_rot, self.env.solid, self.intr)

    def __call__(self):
        env = self.env
        imgs = self.render_raw()
        if not self.ideal:
            out = np.empty_like(imgs)
            for i in range(env.n):
                if env.episode_count[i] != self.episode_marks[i]:
                    self.cleaners[i] = DepthCleaner()
                    self.episode_marks[i] = env.episode_count[i]
                out[i] = self.cleaners[i].push(corrupt_depth(imgs[i], self.rngs[i]))
            imgs = out
        perc = imgs[:, None, :, :].astype(np.float32)
        return (env.proprio().astype(np.float32), perc,
                env.goal_in_base().astype(np.float32))


def make_obs_builder(kind: str, env, *, seed: int = 0, intr=None, **kw):
    """Factory keyed by the training phase / variant name."""
    if kind == "scandots_full":
        return ScandotObs(env, masked=False, intr=intr,
                          max_range=kw.get("max_range"))
    if kind == "scandots_masked":
        return ScandotObs(env, masked=True, intr=intr,
                          max_range=kw.get("max_range"))
    if kind == "slots":
        return SlotObs(env, slots=kw.get("slots", 8), intr=intr)
    if kind == "mapping":
        return MappingObs(env, seed=seed, cfg=kw.get("cfg"), intr=intr)
    if kind == "pick":
        return PickObs(env, intr=intr)
    if kind == "depth":
        return DepthObs(env, seed=seed, intr=intr, ideal=kw.get("ideal", False))
    raise ValueError(f"unknown observation kind {kind!r}")

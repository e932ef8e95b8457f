"""Fixed-camera baseline: the policy's camera commands are overridden with a
constant pan/tilt while the 8 robot command dims pass through untouched."""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from ..robot import CAM_PAN, CAM_TILT, RobotModel

# normalized-action indices of the camera dims ([v, w] + 8 joint targets)
A_PAN, A_TILT = 8, 9


class FixCamPose(Enum):
    """Hand-picked camera poses (pan, tilt) in radians.

    I looks straight ahead, II straight down at the floor in front of the
    base, III down with some forward context, IV ahead with a slight dip
    (the strongest nav compromise of the four).
    """

    I_FRONT = (0.0, 0.0)
    II_DOWN = (0.0, -math.pi / 2)
    III_DOWN_SLIGHT_FORWARD = (0.0, -math.pi / 3)
    IV_FRONT_SLIGHT_DOWN = (0.0, -math.pi / 6)

    @property
    def pan(self) -> float:
        return self.value[0]

    @property
    def tilt(self) -> float:
        return self.value[1]

    @classmethod
    def parse(cls, name: str) -> "FixCamPose":
        key = name.strip().upper().replace("-", "_")
        aliases = {"I": "I_FRONT", "II": "II_DOWN",
                   "III": "III_DOWN_SLIGHT_FORWARD",
                   "IV": "IV_FRONT_SLIGHT_DOWN"}
        key = aliases.get(key, key)
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown fixed-camera pose {name!r}") from None


def normalized_cam_targets(model: RobotModel, pose) -> tuple[float, float]:
    """Normalized action values that hold the camera at the pose.

    Accepts a FixCamPose or a plain (pan, tilt) pair in radians."""
    raw_pan, raw_tilt = (pose.pan, pose.tilt) if isinstance(pose, FixCamPose) \
        else (float(pose[0]), float(pose[1]))
    pan = float(np.clip(raw_pan, model.joint_lo[CAM_PAN], model.joint_hi[CAM_PAN]))
    tilt = float(np.clip(raw_tilt, model.joint_lo[CAM_TILT], model.joint_hi[CAM_TILT]))
    a_pan = (pan - model.joint_mid[CAM_PAN]) / model.joint_half[CAM_PAN]
    a_tilt = (tilt - model.joint_mid[CAM_TILT]) / model.joint_half[CAM_TILT]
    return a_pan, a_tilt


def fixcam_action_transform(model: RobotModel, pose):
    """Returns f(actions) that pins the camera dims and copies the rest.

    Robot dims (0..7) are returned bit-identical so the wrapped policy's
    base/arm behaviour is exactly what it commanded.
    """
    a_pan, a_tilt = normalized_cam_targets(model, pose)

    def transform(actions: np.ndarray) -> np.ndarray:
        out = np.array(actions, copy=True)
        out[..., A_PAN] = a_pan
        out[..., A_TILT] = a_tilt
        return out

    return transform


class FixCamPolicy:
    """Wraps a trained policy so its camera head is ignored.

    The action mean's camera dims are replaced by the fixed pose and their
    log-std collapsed, so both greedy and sampled execution hold the pose;
    every other output is forwarded unchanged."""

    def __init__(self, policy, model: RobotModel, pose: FixCamPose):
        import torch

        self.policy = policy
        self.pose = pose
        a_pan, a_tilt = normalized_cam_targets(model, pose)
        self._cam = torch.tensor([a_pan, a_tilt], dtype=torch.float32)
        self._torch = torch

    def initial_hidden(self, n: int):
        return self.policy.initial_hidden(n)

    @property
    def action_dim(self):
        return self.policy.action_dim

    def step(self, proprio, perc, task, hidden):
        mean, log_std, value, h = self.policy.step(proprio, perc, task, hidden)
        mean = mean.clone()
        mean[:, A_PAN] = self._cam[0]
        mean[:, A_TILT] = self._cam[1]
        log_std = log_std.clone()
        log_std[A_PAN] = -20.0
        log_std[A_TILT] = -20.0
        return mean, log_std, value, h


def fixcam_wrap(policy, model: RobotModel, pose: FixCamPose) -> FixCamPolicy:
    return FixCamPolicy(policy, model, pose)

"""Central configuration: one dataclass per section, INI round-trip.

The on-disk format is plain structured text (``[section]`` headers with
``key = value`` pairs, parsed by :mod:`configparser`).  Unknown sections or
keys are rejected; every value is validated against module invariants at
load time.  ``dump``/``load`` round-trip exactly.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field, fields

from .errors import ConfigError

DEG = math.pi / 180.0


@dataclass
class RobotConfig:
    """Geometry constants and joint/velocity limits (Stretch-RE1-like defaults)."""

    # geometry (meters)
    base_length: float = 0.34      # footprint along base x
    base_width: float = 0.33       # footprint along base y
    base_height: float = 0.20
    mast_side: float = 0.12
    mast_height: float = 1.40
    head_height: float = 1.30      # camera mount height on the mast
    arm_thickness: float = 0.06
    arm_body_len: float = 0.25     # retracted mast-to-gripper distance
    arm_offset_x: float = 0.0      # arm pivot offset along base x
    gripper_size_x: float = 0.08
    gripper_size_y: float = 0.08
    gripper_size_z: float = 0.12
    # joint position limits
    lift_min: float = 0.10
    lift_max: float = 1.10
    extension_min: float = 0.0
    extension_max: float = 0.50
    wrist_min: float = -math.pi / 2
    wrist_max: float = math.pi / 2
    gripper_min: float = 0.0
    gripper_max: float = 0.08
    pan_min: float = -math.pi
    pan_max: float = math.pi * 0.25
    tilt_min: float = -math.pi / 2
    tilt_max: float = math.pi / 6
    # velocity limits
    base_lin_vel_max: float = 0.6
    base_ang_vel_max: float = 1.5
    lift_vel_max: float = 0.15
    extension_vel_max: float = 0.15
    wrist_vel_max: float = 2.0
    gripper_vel_max: float = 0.08
    pan_vel_max: float = 2.0
    tilt_vel_max: float = 2.0

    def validate(self):
        for name in ("base_length", "base_width", "base_height", "mast_side",
                     "arm_thickness", "arm_body_len", "gripper_size_x",
                     "gripper_size_y", "gripper_size_z"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"robot.{name} must be positive")
        pairs = [("lift_min", "lift_max"), ("extension_min", "extension_max"),
                 ("wrist_min", "wrist_max"), ("gripper_min", "gripper_max"),
                 ("pan_min", "pan_max"), ("tilt_min", "tilt_max")]
        for lo, hi in pairs:
            if not getattr(self, lo) < getattr(self, hi):
                raise ConfigError(f"robot.{lo} must be < robot.{hi}")
        for name in ("base_lin_vel_max", "base_ang_vel_max", "lift_vel_max",
                     "extension_vel_max", "wrist_vel_max", "gripper_vel_max",
                     "pan_vel_max", "tilt_vel_max"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"robot.{name} must be positive")
        if self.head_height > self.mast_height:
            raise ConfigError("robot.head_height must not exceed mast_height")


@dataclass
class CameraConfig:
    """Head depth-camera intrinsics and visibility range."""

    hfov_deg: float = 87.0
    vfov_deg: float = 58.0
    width: int = 87
    height: int = 58
    max_range: float = 2.0

    def validate(self):
        if not 0.0 < self.hfov_deg < 180.0 or not 0.0 < self.vfov_deg < 180.0:
            raise ConfigError("camera fov must be in (0, 180) degrees")
        if self.width < 8 or self.height < 8:
            raise ConfigError("camera resolution must be at least 8x8")
        if self.max_range <= 0:
            raise ConfigError("camera.max_range must be positive")


@dataclass
class SceneConfig:
    """Procedural corridor generation parameters."""

    corridor_width_s1: float = 1.0       # Scenario 1: tight straight corridor
    corridor_width_s2: float = 1.5       # Scenario 2: L-shaped corridor
    goal_dist_min: float = 5.0
    goal_dist_max: float = 8.0
    l_leg1_min: float = 5.5              # Scenario 2 leg lengths
    l_leg1_max: float = 6.5
    l_leg2_min: float = 2.5
    l_leg2_max: float = 4.0
    wall_height: float = 1.5
    wall_thickness: float = 0.1
    wall_segment_len: float = 1.0        # walls are emitted as per-segment boxes
    obstacle_len_min: float = 0.3        # ground box side range (x along corridor)
    obstacle_len_max: float = 0.8
    obstacle_height_min: float = 0.3
    obstacle_height_max: float = 0.8
    floating_width_min: float = 0.3
    floating_width_max: float = 0.6
    floating_z_min: float = 0.4          # bottom-face height range for floating boxes
    floating_z_max: float = 0.9
    floating_height_min: float = 0.2
    floating_height_max: float = 0.4
    floating_fraction: float = 0.2
    feasible_gap: float = 0.60           # lateral free gap kept past every obstacle row
    distractor_margin: float = 0.08      # wall-distractor protrusion into the corridor
    distractors_max: int = 3
    row_spacing_min: float = 0.15        # min free x-gap between obstacle rows
    first_row_offset: float = 1.2        # free run-up before the first obstacle row
    # pick scenes
    pick_room_width: float = 2.0
    table_height_min: float = 0.6
    table_height_max: float = 0.8
    table_len_min: float = 0.6
    table_len_max: float = 1.0
    table_depth_min: float = 0.4
    table_depth_max: float = 0.6
    max_attempts: int = 1000

    def validate(self):
        if self.corridor_width_s1 <= 0 or self.corridor_width_s2 <= 0:
            raise ConfigError("corridor widths must be positive")
        if self.goal_dist_min > self.goal_dist_max:
            raise ConfigError("scene.goal_dist_min must be <= goal_dist_max")
        if not 0.0 <= self.floating_fraction <= 1.0:
            raise ConfigError("scene.floating_fraction must be in [0, 1]")
        if self.feasible_gap <= 0:
            raise ConfigError("scene.feasible_gap must be positive")
        if self.max_attempts < 1:
            raise ConfigError("scene.max_attempts must be >= 1")


@dataclass
class RewardConfig:
    """Reward scales; the ``compact`` preset uses the coarser pick split
    (0.5 reach / 0.5 lift, no grasp bonus, no velocity penalty)."""

    preset: str = "detailed"             # "detailed" | "compact"
    nav_dist_scale: float = 0.1
    nav_progress_scale: float = 0.1
    pick_reach_scale: float = 0.1
    pick_grasp_scale: float = 0.5
    pick_lift_scale: float = 0.8
    joint_vel_penalty: float = -0.03
    lift_sharpness: float = 15.0
    lift_height: float = 0.2             # z_target above the table top
    contact_force: float = 20.0          # proxy force reported while grasping
    contact_threshold: float = 10.0      # gate on the summed contact force
    grasp_dist: float = 0.03

    def resolved(self) -> "RewardConfig":
        if self.preset == "compact":
            return dataclasses.replace(
                self, pick_reach_scale=0.5, pick_grasp_scale=0.0,
                pick_lift_scale=0.5, joint_vel_penalty=0.0)
        return self

    def validate(self):
        if self.preset not in ("detailed", "compact"):
            raise ConfigError(f"unknown reward.preset {self.preset!r}")
        if self.contact_force <= self.contact_threshold:
            raise ConfigError("reward.contact_force must exceed contact_threshold")


@dataclass
class EpisodeConfig:
    """Episode state-machine parameters."""

    dt: float = 0.1                      # policy period (10 Hz control)
    timeout_steps: int = 600
    goal_radius: float = 0.15
    lifted_margin: float = 0.15          # object this far above the table counts as lifted
    heading_jitter: float = math.pi / 6  # +-30 degrees at reset
    reset_tilt: float = -20.0 * DEG
    place_timeout_steps: int = 1200

    def validate(self):
        if self.dt <= 0:
            raise ConfigError("episode.dt must be positive")
        if self.timeout_steps < 1:
            raise ConfigError("episode.timeout_steps must be >= 1")
        if self.goal_radius <= 0:
            raise ConfigError("episode.goal_radius must be positive")


@dataclass
class PpoConfig:
    """PPO with truncated BPTT."""

    lr: float = 1e-3
    entropy_coef: float = 5e-4
    gamma: float = 0.99
    lambda_gae: float = 0.95
    clip_eps: float = 0.2
    epochs_per_batch: int = 4
    bptt_len: int = 24
    segments_per_rollout: int = 1        # rollout length = segments * bptt_len
    minibatches: int = 4
    num_envs: int = 256
    value_coef: float = 0.5
    grad_clip_norm: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    total_steps: int = 2_000_000
    eval_every_updates: int = 40
    eval_episodes: int = 64
    plateau_patience: int = 10           # stop after this many evals without improvement
    stop_success: float = 2.0            # early-stop success threshold (>1 disables)
    init_log_std: float = -1.0
    cam_nominal_coef: float = 0.05       # camera-head pull toward the nominal pose (phase 1a)
    imitation_action_dims: int = 8       # robot dims matched against the teacher in phase 1b

    def validate(self):
        for name in ("lr", "entropy_coef", "gamma", "lambda_gae", "clip_eps",
                     "value_coef", "grad_clip_norm", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"ppo.{name} must be positive")
        if self.clip_eps >= 1.0:
            raise ConfigError("ppo.clip_eps must be < 1")
        for name in ("epochs_per_batch", "bptt_len", "segments_per_rollout",
                     "minibatches", "num_envs", "total_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"ppo.{name} must be >= 1")
        if self.num_envs % self.minibatches != 0:
            raise ConfigError("ppo.num_envs must be divisible by ppo.minibatches")


@dataclass
class DaggerConfig:
    """Phase-2 scandots-to-depth distillation (asynchronous DAgger)."""

    buffer_capacity: int = 50_000        # transitions
    segment_len: int = 8
    batch_segments: int = 32
    lr: float = 1e-3
    num_envs: int = 32
    total_steps: int = 300_000
    beta_anneal_frac: float = 0.2        # beta 1 -> 0 over this fraction of steps
    freeze_iters: int = 1000             # trunk frozen for the first learner iterations
    learner_iters_per_segment: float = 1.0
    sync_weights_every: int = 20
    deadlock_timeout_s: float = 60.0
    ideal_depth: bool = False            # skip the corrupt+clean stages
    low_res: bool = False                # 29x44 depth for fast tests

    def validate(self):
        if self.buffer_capacity < self.segment_len:
            raise ConfigError("dagger.buffer_capacity too small")
        for name in ("segment_len", "batch_segments", "num_envs", "total_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"dagger.{name} must be >= 1")
        if not 0.0 < self.beta_anneal_frac <= 1.0:
            raise ConfigError("dagger.beta_anneal_frac must be in (0, 1]")


@dataclass
class BaselineConfig:
    """Classical-stack and noisy-mapping baseline parameters."""

    lidar_height: float = 0.15
    lidar_beams: int = 360
    lidar_max_range: float = 8.0
    grid_resolution: float = 0.05
    logodds_hit: float = 0.85
    logodds_free: float = -0.4
    logodds_clamp: float = 10.0
    mcl_particles: int = 500
    mcl_odom_sigma_xy: float = 0.02
    mcl_odom_sigma_theta: float = 0.02
    mcl_scan_sigma: float = 0.1
    mcl_scan_beams: int = 36
    inflate_radius: float = 0.25
    lookahead: float = 0.4
    cruise_speed: float = 0.4
    tour_spacing: float = 0.5            # scripted mapping-tour waypoint spacing
    replan: bool = False
    stow_lift: float = 1.05
    # noisy full-scandot observations for the Mapping baseline
    map_noise_sigma: float = 0.05
    map_noise_bias: float = 0.1
    map_dropout: float = 0.05

    def validate(self):
        if self.grid_resolution <= 0:
            raise ConfigError("baseline.grid_resolution must be positive")
        if self.mcl_particles < 1:
            raise ConfigError("baseline.mcl_particles must be >= 1")
        if not 0.0 <= self.map_dropout <= 1.0:
            raise ConfigError("baseline.map_dropout must be in [0, 1]")


@dataclass
class BenchConfig:
    """Benchmark suite layout."""

    episodes_per_cell: int = 10
    seeds: int = 3
    dynamic_speed_min: float = 0.2
    dynamic_speed_max: float = 0.6

    def validate(self):
        if self.episodes_per_cell < 1 or self.seeds < 1:
            raise ConfigError("bench episode/seed counts must be >= 1")


@dataclass
class Config:
    """Top-level configuration; sections mirror the package modules."""

    seed: int = 0
    robot: RobotConfig = field(default_factory=RobotConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    dagger: DaggerConfig = field(default_factory=DaggerConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def validate(self) -> "Config":
        for f in fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                v.validate()
        return self


_SECTIONS = {f.name: f.type for f in fields(Config) if f.name != "seed"}


def _parse_value(raw: str, typ: type, where: str):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {where}: {raw!r}") from e


def load_config(path_or_text: str, *, is_text: bool = False) -> Config:
    """Load and validate a configuration file (or literal text)."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive
    try:
        if is_text:
            parser.read_string(path_or_text)
        else:
            with open(path_or_text, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e

    cfg = Config()
    for section in parser.sections():
        if section == "global":
            for key, raw in parser.items(section):
                if key != "seed":
                    raise ConfigError(f"unknown key global.{key}")
                cfg.seed = _parse_value(raw, int, "global.seed")
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        sub = getattr(cfg, section)
        known = {f.name: f.type for f in fields(sub)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {section}.{key}")
            typ = known[key]
            if isinstance(typ, str):  # dataclass stores annotations as strings
                typ = {"int": int, "float": float, "bool": bool, "str": str}[typ]
            setattr(sub, key, _parse_value(raw, typ, f"{section}.{key}"))
    return cfg.validate()


def dump_config(cfg: Config) -> str:
    """Serialize a Config to canonical INI text (defaults included)."""
    out = io.StringIO()
    out.write("[global]\nseed = %d\n\n" % cfg.seed)
    for name in _SECTIONS:
        sub = getattr(cfg, name)
        out.write(f"[{name}]\n")
        for f in fields(sub):
            v = getattr(sub, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            out.write(f"{f.name} = {v}\n")
        out.write("\n")
    return out.getvalue()


def save_config(cfg: Config, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))

"""Procedural scenes, the vectorized environment and the episode API."""

from .scenes import (
    Difficulty,
    ObjectKind,
    ObjectSpec,
    Obstacle,
    ObstacleKind,
    Scenario,
    SceneSpec,
    generate_dynamic_scene,
    generate_pick_scene,
    generate_scene,
    scene_from_text,
    scene_to_text,
)
from .episode import EpisodeState, Task, DoneReason, reset, step, reward_nav, reward_pick, contact_proxy
from .vec_env import VecEnv

__all__ = [
    "Difficulty", "ObjectKind", "ObjectSpec", "Obstacle", "ObstacleKind",
    "Scenario", "SceneSpec", "generate_dynamic_scene", "generate_pick_scene",
    "generate_scene", "scene_from_text", "scene_to_text",
    "EpisodeState", "Task", "DoneReason", "reset", "step", "reward_nav",
    "reward_pick", "contact_proxy", "VecEnv",
]

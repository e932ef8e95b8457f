"""Comparison methods: fixed-camera policies, a noisy-map observation
ablation, and a classical lidar mapping + localization + planning stack."""

from .classical import (LikelihoodField, OccupancyGrid, ParticleSet,
                        bresenham, build_map, classical_episode,
                        estimate_pose, init_particles_at,
                        init_particles_uniform, integrate_scan,
                        lidar_plane_boxes, mcl_update, plan_astar,
                        plane_boxes_from_array, scripted_tour,
                        simulate_lidar, systematic_resample, track_path)
from .fixcam import (FixCamPolicy, FixCamPose, fixcam_action_transform,
                     fixcam_wrap, normalized_cam_targets)

__all__ = [
    "LikelihoodField", "OccupancyGrid", "ParticleSet", "bresenham",
    "build_map", "classical_episode", "estimate_pose", "init_particles_at",
    "init_particles_uniform", "integrate_scan", "lidar_plane_boxes",
    "mcl_update", "plan_astar", "plane_boxes_from_array", "scripted_tour",
    "simulate_lidar", "systematic_resample", "track_path", "FixCamPolicy",
    "FixCamPose", "fixcam_action_transform", "fixcam_wrap",
    "normalized_cam_targets",
]

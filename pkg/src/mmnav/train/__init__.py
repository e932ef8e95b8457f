"""Training stack: PPO with truncated BPTT, curriculum phases, evaluation,
and scandot-to-depth distillation."""

from .dagger import (Collector, DaggerBuffer, Learner, Segment, beta_schedule,
                     distill)
from .evaluate import EvalStats, evaluate_policy
from .gae import gae_advantages
from .phases import (MetricsLog, PhaseResult, cam_nominal_normalized,
                     make_pick_pool, make_scene_pool, run_ppo, train_cvo,
                     train_phase1a, train_phase1b, train_pick)
from .ppo import PpoTrainer, Rollout, StepContext, clipped_surrogate

__all__ = [
    "Collector", "DaggerBuffer", "Learner", "Segment", "beta_schedule",
    "distill", "EvalStats", "evaluate_policy", "gae_advantages",
    "MetricsLog", "PhaseResult", "cam_nominal_normalized", "make_pick_pool",
    "make_scene_pool", "run_ppo", "train_cvo", "train_phase1a",
    "train_phase1b", "train_pick", "PpoTrainer", "Rollout", "StepContext",
    "clipped_surrogate",
]

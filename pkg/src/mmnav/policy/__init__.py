"""Neural policy components and observation plumbing."""

from .checkpoint import (build_policy, load_policy, load_tensors, save_policy,
                         save_tensors)
from .nets import (ACTION_DIM, HIDDEN_DIM, LATENT_DIM, LOG_STD_MAX,
                   LOG_STD_MIN, ActorCritic, DepthEncoder, Hidden,
                   PointNetEncoder, SlotMLPEncoder, VectorEncoder,
                   gaussian_entropy, gaussian_logp, sample_gaussian)
from .obs import (DepthObs, MappingObs, PickObs, ScandotObs, SlotObs,
                  make_obs_builder)

__all__ = [
    "ACTION_DIM", "HIDDEN_DIM", "LATENT_DIM", "LOG_STD_MAX", "LOG_STD_MIN",
    "ActorCritic", "DepthEncoder", "Hidden", "PointNetEncoder",
    "SlotMLPEncoder", "VectorEncoder", "gaussian_entropy", "gaussian_logp",
    "sample_gaussian", "build_policy", "load_policy", "load_tensors",
    "save_policy", "save_tensors", "DepthObs", "MappingObs", "PickObs",
    "ScandotObs", "SlotObs", "make_obs_builder",
]

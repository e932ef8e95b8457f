"""Generalized advantage estimation over (T, N) rollout arrays."""

from __future__ import annotations

import numpy as np


def gae_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                   gamma: float, lam: float,
                   bootstrap: np.ndarray | None = None):
    """Standard exponentially weighted TD(lambda) advantages.

    dones[t] marks that step t ended its episode: no value flows across it.
    bootstrap is V(s_{T}) for each env (zeros when omitted).  Returns
    (advantages, returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    cont = 1.0 - np.asarray(dones, dtype=np.float64)
    t_len = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.zeros(rewards.shape[1]) if bootstrap is None \
        else np.asarray(bootstrap, dtype=np.float64)
    next_adv = np.zeros(rewards.shape[1])
    for t in range(t_len - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * cont[t] - values[t]
        next_adv = delta + gamma * lam * cont[t] * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values

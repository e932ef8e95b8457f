"""Clipped-surrogate PPO with truncated backprop through time.

The rollout is collected step by step with the recurrent state carried
across env steps and zeroed on episode boundaries.  Hidden states are
snapshotted at every bptt_len boundary so each optimization minibatch can
re-unroll its segment exactly; epoch-0 importance ratios are then 1 by
construction, which the tests assert.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..config import PpoConfig
from ..policy.nets import (ActorCritic, Hidden, gaussian_entropy,
                           gaussian_logp, sample_gaussian)
from ..seeding import derive_seed
from .gae import gae_advantages


@dataclass
class StepContext:
    """Everything a reward hook may need about one vectorized step."""

    env: object
    rewards: np.ndarray          # env task rewards (N,)
    actions: np.ndarray          # sampled normalized actions (N, A)
    resets: np.ndarray           # episodes that restarted before this step
    obs: tuple                   # observation consumed by the policy
    info: dict


@dataclass
class Rollout:
    proprio: np.ndarray          # (T, N, 21)
    perc: tuple                  # tuple of (T, N, ...) arrays
    task: np.ndarray             # (T, N, 3)
    actions: np.ndarray          # (T, N, A)
    logp: np.ndarray             # (T, N)
    values: np.ndarray           # (T, N)
    rewards: np.ndarray          # (T, N)
    dones: np.ndarray            # (T, N)
    resets: np.ndarray           # (T, N) hidden zeroed before step t
    snapshots: list              # Hidden at each segment start
    bootstrap: np.ndarray        # V(s_T) (N,)

    def steps(self) -> int:
        return self.proprio.shape[0] * self.proprio.shape[1]


def _to_torch(perc):
    if isinstance(perc, tuple):
        return tuple(torch.from_numpy(p) for p in perc)
    return (torch.from_numpy(perc),)


def _perc_stack(percs: list) -> tuple:
    first = percs[0]
    n_parts = len(first) if isinstance(first, tuple) else 1
    if not isinstance(first, tuple):
        percs = [(p,) for p in percs]
    return tuple(np.stack([p[k] for p in percs]) for k in range(n_parts))


def _perc_slice(perc: tuple, t_sl, env_idx) -> tuple:
    return tuple(torch.from_numpy(np.ascontiguousarray(p[t_sl][:, env_idx]))
                 for p in perc)


def clipped_surrogate(ratio: torch.Tensor, adv: torch.Tensor,
                      clip_eps: float) -> torch.Tensor:
    """Pessimistic clipped policy objective, elementwise:
    min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv)."""
    return torch.minimum(
        ratio * adv,
        torch.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)


class PpoTrainer:
    """Rollout collection and clipped-surrogate updates for one policy."""

    def __init__(self, policy: ActorCritic, env, obs_builder,
                 cfg: PpoConfig | None = None, *, seed: int = 0,
                 reward_hook=None, action_transform=None):
        self.policy = policy
        self.env = env
        self.obs_builder = obs_builder
        self.cfg = cfg or PpoConfig()
        self.reward_hook = reward_hook
        self.action_transform = action_transform
        self.gen = torch.Generator().manual_seed(derive_seed(seed, 0x70706F) % 2 ** 63)
        self.opt = torch.optim.Adam(
            policy.parameters(), lr=self.cfg.lr,
            betas=(self.cfg.adam_beta1, self.cfg.adam_beta2), eps=self.cfg.adam_eps)
        self.hidden = policy.initial_hidden(env.n)
        self.pending_done = np.ones(env.n, dtype=bool)  # first step resets all
        self.total_steps = 0
        # episode bookkeeping fed by info dicts
        self.episodes_done = 0
        self.episodes_success = 0

    # -- collection --------------------------------------------------------

    @torch.no_grad()
    def collect(self) -> Rollout:
        cfg = self.cfg
        t_len = cfg.bptt_len * cfg.segments_per_rollout
        n = self.env.n
        model = self.env.model
        pro_l, perc_l, task_l = [], [], []
        act_l, logp_l, val_l, rew_l, done_l, reset_l = [], [], [], [], [], []
        snapshots = []
        self.policy.eval()
        for t in range(t_len):
            if t % cfg.bptt_len == 0:
                snapshots.append(self.hidden.clone())
            resets = self.pending_done.copy()
            self.hidden.reset_rows(torch.from_numpy(resets))
            obs = self.obs_builder()
            pro, perc, task = obs
            tp = torch.from_numpy(pro)
            tt = torch.from_numpy(task)
            tperc = _to_torch(perc)
            tperc = tperc[0] if not isinstance(perc, tuple) else tperc
            mean, log_std, value, self.hidden = self.policy.step(
                tp, tperc, tt, self.hidden)
            action = sample_gaussian(mean, log_std, self.gen)
            logp = gaussian_logp(mean, log_std, action)
            a_np = action.numpy().astype(np.float64)
            applied = a_np if self.action_transform is None \
                else self.action_transform(a_np)
            rewards, dones, info = self.env.step(
                model.commands_from_normalized(applied))
            if self.reward_hook is not None:
                rewards = self.reward_hook(StepContext(
                    env=self.env, rewards=rewards, actions=a_np,
                    resets=resets, obs=obs, info=info))
            finished = np.flatnonzero(dones)
            self.episodes_done += len(finished)
            self.episodes_success += int(np.isin(
                info["done_reason"][finished], (1, 4)).sum())  # goal / lifted
            pro_l.append(pro)
            perc_l.append(perc)
            task_l.append(task)
            act_l.append(a_np.astype(np.float32))
            logp_l.append(logp.numpy())
            val_l.append(value.numpy())
            rew_l.append(rewards.astype(np.float32))
            done_l.append(dones.copy())
            reset_l.append(resets)
            self.pending_done = dones.copy()
        # bootstrap value for the state after the last transition
        h = self.hidden.clone()
        h.reset_rows(torch.from_numpy(self.pending_done))
        pro, perc, task = self.obs_builder()
        tperc = _to_torch(perc)
        tperc = tperc[0] if not isinstance(perc, tuple) else tperc
        _, _, boot, _ = self.policy.step(
            torch.from_numpy(pro), tperc, torch.from_numpy(task), h)
        self.total_steps += t_len * n
        return Rollout(
            proprio=np.stack(pro_l), perc=_perc_stack(perc_l),
            task=np.stack(task_l), actions=np.stack(act_l),
            logp=np.stack(logp_l), values=np.stack(val_l),
            rewards=np.stack(rew_l), dones=np.stack(done_l),
            resets=np.stack(reset_l), snapshots=snapshots,
            bootstrap=boot.numpy())

    # -- optimization ------------------------------------------------------

    def _segment_loss(self, rollout: Rollout, seg: int, env_idx, adv_n, returns):
        cfg = self.cfg
        sl = slice(seg * cfg.bptt_len, (seg + 1) * cfg.bptt_len)
        pro = torch.from_numpy(np.ascontiguousarray(rollout.proprio[sl][:, env_idx]))
        task = torch.from_numpy(np.ascontiguousarray(rollout.task[sl][:, env_idx]))
        perc = _perc_slice(rollout.perc, sl, env_idx)
        perc = perc if len(perc) > 1 else perc[0]
        acts = torch.from_numpy(np.ascontiguousarray(rollout.actions[sl][:, env_idx]))
        resets = torch.from_numpy(
            np.ascontiguousarray(rollout.resets[sl][:, env_idx])).float()
        old_logp = torch.from_numpy(
            np.ascontiguousarray(rollout.logp[sl][:, env_idx]))
        adv = torch.from_numpy(np.ascontiguousarray(adv_n[sl][:, env_idx])).float()
        ret = torch.from_numpy(np.ascontiguousarray(returns[sl][:, env_idx])).float()
        h0 = rollout.snapshots[seg].select(env_idx).detach()
        means, values = self.policy.unroll(pro, perc, task, resets, h0)
        log_std = self.policy.clamped_log_std()
        logp = gaussian_logp(means, log_std, acts)
        ratio = torch.exp(logp - old_logp)
        surr = clipped_surrogate(ratio, adv, cfg.clip_eps)
        policy_loss = -surr.mean()
        value_loss = ((values - ret) ** 2).mean()
        entropy = gaussian_entropy(log_std)
        loss = (policy_loss + cfg.value_coef * value_loss
                - cfg.entropy_coef * entropy)
        stats = {
            "policy_loss": float(policy_loss.detach()),
            "value_loss": float(value_loss.detach()),
            "entropy": float(entropy.detach()),
            "ratio_max_dev": float((ratio - 1.0).abs().max().detach()),
        }
        return loss, stats

    def update(self, rollout: Rollout) -> dict:
        cfg = self.cfg
        adv, returns = gae_advantages(rollout.rewards, rollout.values,
                                      rollout.dones, cfg.gamma, cfg.lambda_gae,
                                      rollout.bootstrap)
        adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = rollout.proprio.shape[1]
        n_seg = len(rollout.snapshots)
        self.policy.train()
        agg = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
               "loss": 0.0, "epoch0_ratio_dev": 0.0, "diverged": False}
        count = 0
        for epoch in range(cfg.epochs_per_batch):
            perm = torch.randperm(n, generator=self.gen).numpy()
            groups = np.array_split(perm, cfg.minibatches)
            for seg in range(n_seg):
                for g in groups:
                    loss, stats = self._segment_loss(rollout, seg, g, adv_n, returns)
                    if not torch.isfinite(loss):
                        agg["diverged"] = True
                        return agg
                    self.opt.zero_grad(set_to_none=True)
                    loss.backward()
                    torch.nn.utils.clip_grad_norm_(
                        self.policy.parameters(), cfg.grad_clip_norm)
                    self.opt.step()
                    for k in ("policy_loss", "value_loss", "entropy"):
                        agg[k] += stats[k]
                    agg["loss"] += float(loss.detach())
                    if count == 0:
                        # before any optimizer step the recomputed log-probs
                        # must reproduce the stored ones, i.e. ratio == 1
                        agg["epoch0_ratio_dev"] = stats["ratio_max_dev"]
                    count += 1
        for k in ("policy_loss", "value_loss", "entropy", "loss"):
            agg[k] /= max(count, 1)
        agg["mean_reward"] = float(rollout.rewards.mean())
        return agg

    # -- bookkeeping -------------------------------------------------------

    def success_window(self) -> float:
        """Success rate of episodes finished since the last call."""
        if self.episodes_done == 0:
            return float("nan")
        rate = self.episodes_success / self.episodes_done
        self.episodes_done = 0
        self.episodes_success = 0
        return rate

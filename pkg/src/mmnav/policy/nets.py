"""Policy networks: set encoder, recurrent actor-critic, depth encoder.

All perception variants compress to the same 16-dim latent slot so the
recurrent trunk can be transplanted between them (scandot teacher to depth
student, set encoder to flat-slot ablation).  The pick policy skips the
encoder and feeds its 4-dim masked-object vector straight through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
LATENT_DIM = 16
HIDDEN_DIM = 256
ACTION_DIM = 10
_NEG = -1.0e9  # pooled placeholder for fully-masked point sets


class PointNetEncoder(nn.Module):
    """Permutation-invariant point-set encoder: per-point MLP, max pool."""

    latent_dim = LATENT_DIM

    def __init__(self):
        super().__init__()
        self.point_mlp = nn.Sequential(
            nn.Linear(3, 64), nn.ReLU(), nn.Linear(64, 64), nn.ReLU())
        self.proj = nn.Linear(64, LATENT_DIM)

    def forward(self, perc):
        points, mask = perc  # (..., P, 3), (..., P) bool
        lead = points.shape[:-2]
        p = points.reshape(-1, points.shape[-2], 3)
        m = mask.reshape(-1, points.shape[-2])
        feats = self.point_mlp(p)
        feats = feats.masked_fill(~m.unsqueeze(-1), _NEG)
        pooled = feats.max(dim=1).values
        z = self.proj(pooled)
        nonempty = m.any(dim=1, keepdim=True)
        z = torch.where(nonempty, z, torch.zeros_like(z))
        return z.reshape(*lead, LATENT_DIM)


class SlotMLPEncoder(nn.Module):
    """Flat fixed-slot encoder (the non-permutation-invariant ablation).

    Input: `slots` boxes x 8 corners x 3, masked corners zero-filled,
    boxes in generation order with overflow truncated to the nearest ones.
    """

    latent_dim = LATENT_DIM

    def __init__(self, slots: int = 8):
        super().__init__()
        self.slots = slots
        self.net = nn.Sequential(
            nn.Linear(slots * 24, 128), nn.ReLU(),
            nn.Linear(128, 64), nn.ReLU(),
            nn.Linear(64, LATENT_DIM))

    def forward(self, perc):
        lead = perc.shape[:-1]
        return self.net(perc.reshape(-1, self.slots * 24)).reshape(*lead, LATENT_DIM)


class DepthEncoder(nn.Module):
    """Conv stack for depth images, emitting the shared 16-dim latent."""

    latent_dim = LATENT_DIM

    def __init__(self, height: int = 58, width: int = 87):
        super().__init__()
        self.height = height
        self.width = width
        self.convs = nn.Sequential(
            nn.Conv2d(1, 16, 5, stride=2, padding=2), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, 32, 3, stride=2, padding=1), nn.ReLU())
        with torch.no_grad():
            flat = self.convs(torch.zeros(1, 1, height, width)).numel()
        self.fc = nn.Sequential(
            nn.Linear(flat, 256), nn.ReLU(),
            nn.Linear(256, 128), nn.ReLU(),
            nn.Linear(128, LATENT_DIM))

    def forward(self, perc):
        lead = perc.shape[:-3]
        x = perc.reshape(-1, 1, self.height, self.width)
        return self.fc(self.convs(x).flatten(1)).reshape(*lead, LATENT_DIM)


class VectorEncoder(nn.Module):
    """Identity slot for policies that take a raw perception vector."""

    def __init__(self, dim: int):
        super().__init__()
        self.latent_dim = dim

    def forward(self, perc):
        return perc


@dataclass
class Hidden:
    """Per-environment recurrent state (actor and critic cells)."""

    ha: torch.Tensor
    ca: torch.Tensor
    hc: torch.Tensor
    cc: torch.Tensor

    def detach(self) -> "Hidden":
        return Hidden(self.ha.detach(), self.ca.detach(),
                      self.hc.detach(), self.cc.detach())

    def clone(self) -> "Hidden":
        return Hidden(self.ha.clone(), self.ca.clone(),
                      self.hc.clone(), self.cc.clone())

    def select(self, idx) -> "Hidden":
        return Hidden(self.ha[idx], self.ca[idx], self.hc[idx], self.cc[idx])

    def reset_rows(self, done_mask: torch.Tensor) -> None:
        keep = (~done_mask).unsqueeze(-1).to(self.ha.dtype)
        self.ha = self.ha * keep
        self.ca = self.ca * keep
        self.hc = self.hc * keep
        self.cc = self.cc * keep


def _init_lstm(cell: nn.LSTMCell) -> None:
    # orthogonal recurrent weights, forget-gate bias 1, per-gate blocks
    h = cell.hidden_size
    for i in range(4):
        nn.init.orthogonal_(cell.weight_hh.data[i * h:(i + 1) * h])
    nn.init.zeros_(cell.bias_hh.data)
    nn.init.zeros_(cell.bias_ih.data)
    cell.bias_ih.data[h:2 * h] = 1.0


def _init_head(layer: nn.Linear, gain: float) -> None:
    nn.init.orthogonal_(layer.weight.data, gain=gain)
    nn.init.zeros_(layer.bias.data)


class ActorCritic(nn.Module):
    """Recurrent Gaussian policy with a value head.

    Observation = proprioception + encoded perception + task vector.  The
    critic runs its own recurrent cell by default (share_trunk collapses
    them).  log-std is state independent and clamped to [-5, 1].
    """

    def __init__(self, encoder: nn.Module, proprio_dim: int = 21,
                 task_dim: int = 3, action_dim: int = ACTION_DIM,
                 hidden_dim: int = HIDDEN_DIM, share_trunk: bool = False,
                 init_log_std: float = -1.0):
        super().__init__()
        self.encoder = encoder
        self.proprio_dim = proprio_dim
        self.task_dim = task_dim
        self.action_dim = action_dim
        self.hidden_dim = hidden_dim
        self.share_trunk = share_trunk
        in_dim = proprio_dim + encoder.latent_dim + task_dim
        self.in_dim = in_dim
        self.actor_cell = nn.LSTMCell(in_dim, hidden_dim)
        _init_lstm(self.actor_cell)
        if share_trunk:
            self.critic_cell = None
        else:
            self.critic_cell = nn.LSTMCell(in_dim, hidden_dim)
            _init_lstm(self.critic_cell)
        self.mu_head = nn.Linear(hidden_dim, action_dim)
        _init_head(self.mu_head, 0.01)
        self.v_head = nn.Linear(hidden_dim, 1)
        _init_head(self.v_head, 1.0)
        self.log_std = nn.Parameter(torch.full((action_dim,), float(init_log_std)))

    # -- helpers ----------------------------------------------------------

    def initial_hidden(self, n: int, device=None, dtype=None) -> Hidden:
        p = next(self.parameters())
        device = device or p.device
        dtype = dtype or p.dtype
        z = lambda: torch.zeros(n, self.hidden_dim, device=device, dtype=dtype)
        return Hidden(z(), z(), z(), z())

    def clamped_log_std(self) -> torch.Tensor:
        return self.log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)

    def _obs_vec(self, proprio, perc, task):
        z = self.encoder(perc)
        return torch.cat([proprio, z, task], dim=-1)

    # -- forward ----------------------------------------------------------

    def step(self, proprio, perc, task, hidden: Hidden):
        """Single step: (mean, log_std, value, new hidden)."""
        x = self._obs_vec(proprio, perc, task)
        ha, ca = self.actor_cell(x, (hidden.ha, hidden.ca))
        if self.critic_cell is None:
            hc, cc = ha, ca
        else:
            hc, cc = self.critic_cell(x, (hidden.hc, hidden.cc))
        mean = self.mu_head(ha)
        value = self.v_head(hc).squeeze(-1)
        return mean, self.clamped_log_std(), value, Hidden(ha, ca, hc, cc)

    def unroll(self, proprio, perc, task, resets, h0: Hidden):
        """Sequence forward: inputs lead with (T, N); resets zero the state
        before consuming the matching step.  Returns (means, values)."""
        t_len = proprio.shape[0]
        x = self._obs_vec(proprio, perc, task)
        ha, ca, hc, cc = h0.ha, h0.ca, h0.hc, h0.cc
        means, values = [], []
        for t in range(t_len):
            keep = (1.0 - resets[t]).unsqueeze(-1).to(x.dtype)
            ha, ca = ha * keep, ca * keep
            ha, ca = self.actor_cell(x[t], (ha, ca))
            if self.critic_cell is None:
                hc, cc = ha, ca
            else:
                hc, cc = hc * keep, cc * keep
                hc, cc = self.critic_cell(x[t], (hc, cc))
            means.append(self.mu_head(ha))
            values.append(self.v_head(hc).squeeze(-1))
        return torch.stack(means), torch.stack(values)


# ---------------------------------------------------------------------------
# diagonal Gaussian action distribution
# ---------------------------------------------------------------------------

_LOG_2PI = math.log(2.0 * math.pi)


def gaussian_logp(mean, log_std, actions) -> torch.Tensor:
    """Summed log density of a diagonal Gaussian, computed pre-clamp."""
    var = torch.exp(2.0 * log_std)
    return (-0.5 * (actions - mean) ** 2 / var - log_std - 0.5 * _LOG_2PI).sum(-1)


def gaussian_entropy(log_std) -> torch.Tensor:
    return (log_std + 0.5 * (1.0 + _LOG_2PI)).sum(-1)


def sample_gaussian(mean, log_std, generator=None) -> torch.Tensor:
    eps = torch.randn(mean.shape, generator=generator, device=mean.device,
                      dtype=mean.dtype)
    return mean + eps * torch.exp(log_std)

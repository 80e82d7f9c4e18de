"""
Modality-decoupled Diffusion Network
Lightweight vector denoiser over the target latent, with its training step and DDIM sampler
"""

import logging
import math
from typing import Callable, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..exceptions import CDMValidationError, NonFiniteLossError
from .schedules import (
    TERMINAL_STEP,
    NoiseSchedule,
    ddim_step,
    forward_diffuse,
    make_ddim_timesteps,
)

logger = logging.getLogger(__name__)

Denoiser = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def timestep_embed(t, dim: int, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Interleaved sin/cos features: [sin(t w_0), cos(t w_0), sin(t w_1), ...], w_i = 10000^(-2i/dim)"""
    if dim % 2:
        raise CDMValidationError(f"embedding dim must be even, got {dim}")
    t = torch.as_tensor(t)
    if torch.any(t < 0):
        raise CDMValidationError("timesteps must be >= 0")
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64, device=t.device) / half)
    angles = t.to(torch.float64).reshape(-1, 1) * freqs
    emb = torch.stack([angles.sin(), angles.cos()], dim=-1).reshape(-1, dim)
    if t.dim() == 0:
        emb = emb[0]
    return emb.to(dtype)


class NormActLinear(nn.Module):
    """LayerNorm -> SiLU -> Linear"""

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.norm = nn.LayerNorm(in_features)
        self.linear = nn.Linear(in_features, out_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.linear(F.silu(self.norm(x)))


class ResidualBlock(nn.Module):
    """x + out(in(x) + time(emb))"""

    def __init__(self, hidden: int, time_dim: int):
        super().__init__()
        self.input_layer = NormActLinear(hidden, hidden)
        self.timestep_layer = NormActLinear(time_dim, hidden)
        self.output_layer = NormActLinear(hidden, hidden)

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        return x + self.output_layer(self.input_layer(x) + self.timestep_layer(emb))


class ModalityDecoupledDiffusionNetwork(nn.Module):
    """x0-predicting denoiser; the two latent halves get their own input projection"""

    def __init__(self, latent_dim: int = 256, hidden: int = 0, blocks: int = 3,
                 time_dim: int = 128, decouple: bool = True):
        super().__init__()
        if latent_dim % 2:
            raise CDMValidationError(f"latent dim must be even, got {latent_dim}")
        if blocks < 1:
            raise CDMValidationError("at least one residual block is required")
        hidden = hidden or 4 * latent_dim
        self.latent_dim = latent_dim
        self.time_dim = time_dim
        self.decoupled = decouple
        if decouple:
            self.decouple_a = nn.Linear(latent_dim // 2, hidden // 2)
            self.decouple_b = nn.Linear(latent_dim // 2, hidden - hidden // 2)
        else:
            self.project = nn.Linear(latent_dim, hidden)
        self.blocks = nn.ModuleList(ResidualBlock(hidden, time_dim) for _ in range(blocks))
        self.head = nn.Linear(hidden, latent_dim)

    @classmethod
    def from_config(cls, config) -> "ModalityDecoupledDiffusionNetwork":
        return cls(latent_dim=config.latent_dim, hidden=config.effective_mdn_hidden,
                   blocks=config.mdn_blocks, time_dim=config.mdn_time_dim,
                   decouple=config.mdn_decouple)

    def decouple(self, y_t: torch.Tensor) -> torch.Tensor:
        if y_t.shape[-1] != self.latent_dim:
            raise CDMValidationError(f"expected latent dim {self.latent_dim}, got {y_t.shape[-1]}")
        if not self.decoupled:
            return self.project(y_t)
        first, second = y_t.split(self.latent_dim // 2, dim=-1)
        return torch.cat([self.decouple_a(first), self.decouple_b(second)], dim=-1)

    def forward(self, y_t: torch.Tensor, t) -> torch.Tensor:
        h = self.decouple(y_t)
        t = torch.as_tensor(t, device=y_t.device)
        emb = timestep_embed(t, self.time_dim, dtype=y_t.dtype).to(y_t.device)
        if h.dim() > 1 and emb.dim() == 1:
            emb = emb.expand(h.shape[0], -1)
        for block in self.blocks:
            h = block(h, emb)
        return self.head(h)


def mdn_forward(model: Denoiser, y_t: torch.Tensor, t) -> torch.Tensor:
    """x0 estimate for y_t at timestep t"""
    return model(y_t, t)


def mdn_train_step(model: nn.Module, optimizer: Optional[torch.optim.Optimizer],
                   y0_batch: torch.Tensor, schedule: NoiseSchedule,
                   generator: torch.Generator, epoch: int = 0, step: int = 0) -> torch.Tensor:
    """One x0-regression step; returns the batch loss measured before the update"""
    if y0_batch.dim() != 2 or y0_batch.shape[0] == 0:
        raise CDMValidationError(f"expected non-empty (N, D) latent batch, got {tuple(y0_batch.shape)}")

    t = torch.randint(0, schedule.T, (y0_batch.shape[0],), generator=generator)
    eps = torch.randn(y0_batch.shape, generator=generator, dtype=y0_batch.dtype)
    y_t = forward_diffuse(y0_batch, t, eps, schedule)
    loss = F.mse_loss(model(y_t, t), y0_batch)
    if not torch.isfinite(loss):
        raise NonFiniteLossError("mdn", epoch, step, loss.item())

    if optimizer is not None:
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    return loss.detach()


@torch.no_grad()
def mdn_sample(model: Denoiser, schedule: NoiseSchedule, n_sampling: int,
               generator: torch.Generator, num_samples: int = 1, latent_dim: int = None,
               dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Draw y_T ~ N(0, I) and walk the DDIM subsequence down to the x0 estimate"""
    if latent_dim is None:
        latent_dim = getattr(model, "latent_dim", None)
        if latent_dim is None:
            raise CDMValidationError("latent_dim is required for models without a latent_dim attribute")
    steps = make_ddim_timesteps(schedule.T, n_sampling)

    y = torch.randn((num_samples, latent_dim), generator=generator, dtype=dtype)
    for i, t in enumerate(steps):
        t = int(t)
        t_prev = int(steps[i + 1]) if i + 1 < len(steps) else TERMINAL_STEP
        t_batch = torch.full((num_samples,), t, dtype=torch.long)
        y0_hat = model(y, t_batch)
        y = ddim_step(y, y0_hat, t, t_prev, schedule)
    return y

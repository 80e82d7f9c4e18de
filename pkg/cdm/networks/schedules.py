"""
Diffusion-time machinery
Linear noise schedules, the forward marginal and deterministic x0-prediction DDIM steps
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
import torch

from ..exceptions import CDMValidationError

# t_prev value meaning "past the last listed step": ddim_step returns the x0 estimate
TERMINAL_STEP = -1

Timestep = Union[int, torch.Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    """betas, alphas and cumulative alpha products over T steps (float64)"""

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return int(self.betas.shape[0])

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t < self.T:
            raise CDMValidationError(f"timestep {t} outside [0, {self.T - 1}]")
        return float(self.alpha_bars[t])

    def alpha_bars_tensor(self, t: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
        """Gather alpha_bars[t] for a batch of timesteps, shaped to broadcast against `like`"""
        if torch.any(t < 0) or torch.any(t >= self.T):
            raise CDMValidationError(f"timesteps outside [0, {self.T - 1}]")
        table = torch.as_tensor(self.alpha_bars, dtype=like.dtype, device=like.device)
        return table[t].reshape(-1, *([1] * (like.dim() - 1)))


def make_linear_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Betas linearly spaced from beta_start to beta_end inclusive"""
    if T < 1:
        raise CDMValidationError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
        raise CDMValidationError(f"betas must lie in (0,1), got {beta_start}..{beta_end}")
    if beta_start > beta_end:
        raise CDMValidationError("beta_start must not exceed beta_end")

    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    for array in (betas, alphas, alpha_bars):
        array.setflags(write=False)
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def forward_diffuse(y0: torch.Tensor, t: Timestep, eps: torch.Tensor,
                    schedule: NoiseSchedule) -> torch.Tensor:
    """y_t = sqrt(abar_t) * y0 + sqrt(1 - abar_t) * eps; t is an int or a per-row tensor"""
    if y0.shape != eps.shape:
        raise CDMValidationError(f"y0 shape {tuple(y0.shape)} != eps shape {tuple(eps.shape)}")
    if isinstance(t, torch.Tensor):
        abar = schedule.alpha_bars_tensor(t, like=y0)
        return abar.sqrt() * y0 + (1.0 - abar).sqrt() * eps
    abar = schedule.alpha_bar(t)
    return math.sqrt(abar) * y0 + math.sqrt(1.0 - abar) * eps


def make_ddim_timesteps(T: int, n_sampling: int) -> np.ndarray:
    """Decreasing subsequence starting at T-1, stride floor(T/n), last entry forced to 0"""
    if T < 1:
        raise CDMValidationError(f"T must be >= 1, got {T}")
    if not 1 <= n_sampling <= T:
        raise CDMValidationError(f"n_sampling must lie in [1, {T}], got {n_sampling}")
    if n_sampling == 1:
        return np.array([T - 1], dtype=np.int64)

    stride = T // n_sampling
    head = [T - 1 - k * stride for k in range(n_sampling - 1)]
    return np.array(head + [0], dtype=np.int64)


def ddim_step(y_t: torch.Tensor, y0_hat: torch.Tensor, t: int, t_prev: int,
              schedule: NoiseSchedule) -> torch.Tensor:
    """One eta=0 DDIM update from t to t_prev using the network's x0 estimate"""
    if y_t.shape != y0_hat.shape:
        raise CDMValidationError(f"y_t shape {tuple(y_t.shape)} != y0_hat shape {tuple(y0_hat.shape)}")
    if t_prev >= t:
        raise CDMValidationError(f"t_prev ({t_prev}) must be smaller than t ({t})")
    if t_prev == TERMINAL_STEP:
        return y0_hat
    if t_prev < 0:
        raise CDMValidationError(f"t_prev must be >= 0 or the terminal step, got {t_prev}")

    abar_t = schedule.alpha_bar(t)
    if 1.0 - abar_t <= 0.0:
        raise CDMValidationError(f"alpha_bar at t={t} is 1; noise estimate undefined")
    abar_prev = schedule.alpha_bar(t_prev)

    eps_hat = (y_t - math.sqrt(abar_t) * y0_hat) / math.sqrt(1.0 - abar_t)
    return math.sqrt(abar_prev) * y0_hat + math.sqrt(1.0 - abar_prev) * eps_hat

"""
Forward noising process

x_t = sqrt(alpha_bar_t) * x_0 + sqrt(1 - alpha_bar_t) * eps, with alpha_bar the
cumulative product of (1 - beta).
"""

from typing import Union

import torch

from ..utils.errors import ConfigError, ShapeError, TimestepError
from .models import NoiseSchedule

Timestep = Union[int, torch.Tensor]


def build_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta ramp and its cumulative products"""
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}", T=T)
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"Need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}",
            beta_start=beta_start, beta_end=beta_end,
        )
    betas = torch.linspace(beta_start, beta_end, T, dtype=torch.float64)
    alphas = 1.0 - betas
    return NoiseSchedule(T=T, betas=betas, alphas=alphas, alpha_bar=torch.cumprod(alphas, dim=0))


def check_timesteps(t: Timestep, sched: NoiseSchedule) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=torch.long)
    if t.numel() and (int(t.min()) < 0 or int(t.max()) >= sched.T):
        raise TimestepError(f"Timestep out of range [0, {sched.T}): {t.tolist()}", T=sched.T)
    return t


def _broadcast(values: torch.Tensor, t: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    v = values[t].to(like.dtype)
    if t.dim() == 0:
        return v
    return v.reshape(-1, *([1] * (like.dim() - 1)))


def q_sample(x0: torch.Tensor, t: Timestep, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """Noise model-space images (values in [-1, 1]) to step t. `t` is an int or one int per sample."""
    if eps.shape != x0.shape:
        raise ShapeError(f"eps {tuple(eps.shape)} does not match x0 {tuple(x0.shape)}")
    t = check_timesteps(t, sched)
    signal = _broadcast(sched.alpha_bar.sqrt(), t, x0)
    noise = _broadcast((1.0 - sched.alpha_bar).sqrt(), t, x0)
    return signal * x0 + noise * eps

"""
Noise-prediction loss

Mean squared error between the drawn noise and the denoiser's prediction, with
images given in [0, 1] and mapped to [-1, 1] before noising.
"""

from typing import Callable, Optional

import torch
import torch.nn.functional as F

from ..utils.errors import ConfigError
from .models import NoiseSchedule
from .schedule import check_timesteps, q_sample

Denoiser = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]


def to_model_space(x: torch.Tensor) -> torch.Tensor:
    return x * 2.0 - 1.0


def to_pixel_space(x: torch.Tensor) -> torch.Tensor:
    return (x + 1.0) / 2.0


def ldm_loss(
    denoiser: Denoiser,
    x0: torch.Tensor,
    token_ids: torch.Tensor,
    sched: NoiseSchedule,
    generator: Optional[torch.Generator] = None,
    t: Optional[torch.Tensor] = None,
    noise: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """E ||eps - eps_theta(x_t, t, c)||^2 over the batch.

    When `t` / `noise` are omitted they are drawn from `generator`: t uniform
    over [0, T) per sample first, then standard-normal noise.
    """
    if x0.shape[0] == 0:
        raise ConfigError("ldm_loss needs a non-empty batch")
    batch = x0.shape[0]
    if t is None:
        t = torch.randint(0, sched.T, (batch,), generator=generator)
    t = check_timesteps(t, sched).reshape(-1).expand(batch)
    if noise is None:
        noise = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    x_t = q_sample(to_model_space(x0), t, noise, sched)
    return F.mse_loss(denoiser(x_t, t, token_ids), noise)

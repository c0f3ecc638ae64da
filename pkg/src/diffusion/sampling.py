"""
Reverse-process samplers

Ancestral DDPM over all T steps, or a deterministic DDIM-style chain over a
subsequence of timesteps. Output images are clamped to [0, 1].
"""

from typing import Sequence

import torch

from ..utils.errors import ConfigError
from .losses import Denoiser, to_pixel_space
from .models import NoiseSchedule

SAMPLERS = ("ancestral", "deterministic")


@torch.no_grad()
def sample(
    denoiser: Denoiser,
    token_ids: torch.Tensor,
    sched: NoiseSchedule,
    n_images: int,
    seed: int,
    sampler: str = "deterministic",
    steps: int = 25,
    image_shape: Sequence[int] = (3, 32, 32),
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    if n_images <= 0:
        raise ConfigError(f"n_images must be positive, got {n_images}")
    if sampler not in SAMPLERS:
        raise ConfigError(f"Unknown sampler: {sampler}", choices=list(SAMPLERS))

    gen = torch.Generator().manual_seed(seed)
    x = torch.randn((n_images, *image_shape), generator=gen, dtype=dtype)
    if sampler == "ancestral":
        x = _ancestral(denoiser, x, token_ids, sched, gen)
    else:
        x = _deterministic(denoiser, x, token_ids, sched, steps)
    return to_pixel_space(x).clamp(0.0, 1.0)


def _ancestral(denoiser, x, token_ids, sched, gen):
    for step in reversed(range(sched.T)):
        t = torch.full((x.shape[0],), step, dtype=torch.long)
        eps = denoiser(x, t, token_ids)
        beta = sched.betas[step].item()
        alpha_bar = sched.alpha_bar[step].item()
        mean = (x - beta / (1.0 - alpha_bar) ** 0.5 * eps) / (1.0 - beta) ** 0.5
        if step == 0:
            x = mean
        else:
            alpha_bar_prev = sched.alpha_bar[step - 1].item()
            variance = beta * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar)
            x = mean + variance ** 0.5 * torch.randn(x.shape, generator=gen, dtype=x.dtype)
    return x


def _deterministic(denoiser, x, token_ids, sched, steps):
    steps = min(steps, sched.T)
    timesteps = torch.linspace(sched.T - 1, 0, steps, dtype=torch.float64).round().long().unique_consecutive()
    for i, step in enumerate(timesteps.tolist()):
        t = torch.full((x.shape[0],), step, dtype=torch.long)
        eps = denoiser(x, t, token_ids)
        alpha_bar = sched.alpha_bar[step].item()
        alpha_bar_prev = sched.alpha_bar[timesteps[i + 1]].item() if i + 1 < len(timesteps) else 1.0
        x0 = ((x - (1.0 - alpha_bar) ** 0.5 * eps) / alpha_bar ** 0.5).clamp(-1.0, 1.0)
        x = alpha_bar_prev ** 0.5 * x0 + (1.0 - alpha_bar_prev) ** 0.5 * eps
    return x

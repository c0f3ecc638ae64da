"""
Denoiser training loop

Adam over a chosen parameter set minimizing the noise-prediction loss. Used for
pretraining (all parameters) and reused by the fine-tuning harnesses.
"""

import copy
import math
import time
from typing import Callable, Iterable, List, Optional

import torch
from loguru import logger

from ..utils.errors import ConfigError, TrainingError
from .losses import ldm_loss
from .models import NoiseSchedule, TrainingResult
from .unet import ConditionalUNet

StepHook = Callable[[ConditionalUNet], None]


def train_denoiser(
    model: ConditionalUNet,
    images: torch.Tensor,
    token_ids: torch.Tensor,
    sched: NoiseSchedule,
    parameter_names: Iterable[str],
    steps: int,
    lr: float,
    batch_size: int,
    seed: int,
    after_step: Optional[StepHook] = None,
    label: str = "train",
    log_every: int = 100,
) -> List[float]:
    """Optimize `model` in place; returns the per-step losses"""
    if images.shape[0] == 0:
        raise ConfigError(f"{label}: dataset is empty")
    if batch_size < 1:
        raise ConfigError(f"{label}: batch_size must be positive, got {batch_size}")

    names = set(parameter_names)
    trainable = [p for n, p in model.named_parameters() if n in names]
    losses: List[float] = []
    if steps <= 0 or not trainable:
        return losses

    for name, param in model.named_parameters():
        param.requires_grad_(name in names)
    gen = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(trainable, lr=lr)
    model.train()
    try:
        for step in range(steps):
            idx = torch.randint(0, images.shape[0], (batch_size,), generator=gen)
            loss = ldm_loss(model, images[idx], token_ids, sched, gen)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"{label}: loss became {value} at step {step}", step=step)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            if after_step is not None:
                after_step(model)
            losses.append(value)
            if log_every and (step % log_every == 0 or step == steps - 1):
                window = losses[-log_every:]
                logger.info(f"{label} step {step + 1}/{steps} loss {value:.4f} running {sum(window) / len(window):.4f}")
    finally:
        for param in model.parameters():
            param.requires_grad_(True)
    return losses


def pretrain(
    images: torch.Tensor,
    model: ConditionalUNet,
    token_ids: torch.Tensor,
    sched: NoiseSchedule,
    steps: int,
    lr: float,
    batch_size: int,
    seed: int,
    log_every: int = 100,
) -> TrainingResult:
    """Train every parameter of a copy of `model` on the dataset"""
    start = time.perf_counter()
    trained = copy.deepcopy(model)
    losses = train_denoiser(
        trained, images, token_ids, sched, trained.subset_names("all"),
        steps=steps, lr=lr, batch_size=batch_size, seed=seed, label="pretrain", log_every=log_every,
    )
    return TrainingResult(model=trained, losses=losses, seconds=time.perf_counter() - start)

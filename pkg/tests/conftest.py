"""
Shared test fixtures: a toy denoiser and schedule small enough to train in
milliseconds.
"""

import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.diffusion.models import ModelConfig
from src.diffusion.schedule import build_schedule
from src.diffusion.unet import build_denoiser

TINY_CONFIG = ModelConfig(image_size=8, widths=[4], context_dim=4, attn_dim=4, time_dim=8)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return TINY_CONFIG.model_copy(deep=True)


@pytest.fixture
def tiny_model(tiny_config):
    return build_denoiser(tiny_config, seed=0)


@pytest.fixture
def tiny_sched():
    return build_schedule(20, 1e-3, 0.2)


@pytest.fixture
def tiny_images() -> torch.Tensor:
    """Two 8x8 photos strictly inside [0.2, 0.8]"""
    gen = torch.Generator().manual_seed(0)
    return 0.2 + 0.6 * torch.rand((2, 3, 8, 8), generator=gen)

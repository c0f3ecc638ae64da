"""
Text-conditioned pixel-space diffusion model

Noise schedule and forward process, the cross-attention U-Net denoiser, the
noise-prediction loss, samplers, pretraining and the CAATCKPT codec.
"""

from .checkpoint import load_checkpoint, load_tensors, save_checkpoint, save_tensors
from .freezing import assert_frozen, parameter_bytes
from .losses import ldm_loss, to_model_space, to_pixel_space
from .models import (
    FILLER_TOKENS, SUBJECT_TOKEN, ModelConfig, NoiseSchedule, PromptContext,
    SamplerConfig, ScheduleConfig, TrainingResult,
)
from .sampling import sample
from .schedule import build_schedule, q_sample
from .trainer import pretrain, train_denoiser
from .unet import PARAMETER_SUBSETS, ConditionalUNet, build_denoiser, cross_attention, encode_prompt
from .vocabulary import Vocabulary

__all__ = [
    "load_checkpoint", "load_tensors", "save_checkpoint", "save_tensors",
    "assert_frozen", "parameter_bytes",
    "ldm_loss", "to_model_space", "to_pixel_space",
    "FILLER_TOKENS", "SUBJECT_TOKEN", "ModelConfig", "NoiseSchedule", "PromptContext",
    "SamplerConfig", "ScheduleConfig", "TrainingResult",
    "sample", "build_schedule", "q_sample", "pretrain", "train_denoiser",
    "PARAMETER_SUBSETS", "ConditionalUNet", "build_denoiser", "cross_attention", "encode_prompt",
    "Vocabulary",
]

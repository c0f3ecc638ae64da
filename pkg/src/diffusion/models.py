"""
Diffusion Data Models

Configuration and record types for the denoiser, the noise schedule, prompts
and training runs.
"""

from typing import List, Tuple

import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator

SUBJECT_TOKEN = "S*"
FILLER_TOKENS = ["a", "photo", "of", "person"]
DEFAULT_VOCABULARY = FILLER_TOKENS + [SUBJECT_TOKEN, "in", "front", "the", "pyramid", "portrait"]


class ModelConfig(BaseModel):
    """Denoiser architecture"""
    in_channels: int = Field(3, ge=1, description="Image channels C")
    image_size: int = Field(32, ge=4, description="Square image side H = W")
    widths: List[int] = Field(default_factory=lambda: [32, 64], description="Channel width per resolution level")
    context_dim: int = Field(32, ge=1, description="Token embedding dim d")
    attn_dim: int = Field(32, ge=1, description="Attention inner dim d_a")
    time_dim: int = Field(64, ge=2, description="Sinusoidal time embedding dim")
    vocabulary: List[str] = Field(default_factory=lambda: list(DEFAULT_VOCABULARY), description="Base vocabulary")

    @field_validator("widths")
    @classmethod
    def _widths(cls, v: List[int]) -> List[int]:
        if not v or any(w < 1 for w in v):
            raise ValueError("widths must be a non-empty list of positive ints")
        return v

    @field_validator("time_dim")
    @classmethod
    def _even(cls, v: int) -> int:
        if v % 2:
            raise ValueError("time_dim must be even")
        return v

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return (self.in_channels, self.image_size, self.image_size)


class ScheduleConfig(BaseModel):
    """Linear beta ramp"""
    T: int = Field(100, description="Diffusion step count")
    beta_start: float = Field(1e-3, description="First beta")
    beta_end: float = Field(0.2, description="Last beta")


class SamplerConfig(BaseModel):
    """Reverse-process settings used for evaluation"""
    sampler: str = Field("deterministic", description="ancestral | deterministic")
    steps: int = Field(25, ge=1, description="Deterministic sampler step count")


class NoiseSchedule(BaseModel):
    """beta_t / alpha_bar_t tables of the forward process (64-bit)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    T: int = Field(..., description="Step count")
    betas: torch.Tensor = Field(..., description="beta_t, shape (T,)")
    alphas: torch.Tensor = Field(..., description="1 - beta_t")
    alpha_bar: torch.Tensor = Field(..., description="Cumulative product of alphas")


class PromptContext(BaseModel):
    """Token ids and the gathered embedding rows c (s x d)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    token_ids: torch.Tensor = Field(..., description="Token ids, shape (s,)")
    context: torch.Tensor = Field(..., description="Embedding rows, shape (s, d)")

    @property
    def length(self) -> int:
        return int(self.token_ids.shape[0])


class TrainingResult(BaseModel):
    """Trained model plus its loss curve"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: torch.nn.Module
    losses: List[float] = Field(default_factory=list)
    seconds: float = 0.0

    def running_loss(self, window: int = 50, at_end: bool = True) -> float:
        if not self.losses:
            return float("nan")
        chunk = self.losses[-window:] if at_end else self.losses[:window]
        return sum(chunk) / len(chunk)

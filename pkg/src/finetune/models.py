"""
Fine-tuning Data Models
"""

from enum import Enum
from typing import List, Optional

import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator


class FineTuneMethod(str, Enum):
    """定制化微调方法"""
    FULL_FINETUNE = "full_finetune"     # DreamBooth-style, every parameter
    KV_ONLY = "kv_only"                 # Custom-Diffusion-style, W_K / W_V
    EMBEDDING_ONLY = "embedding_only"   # Textual-Inversion-style, one new token row


# steps, lr, batch size per method
METHOD_DEFAULTS = {
    FineTuneMethod.FULL_FINETUNE: (1000, 5e-7, 1),
    FineTuneMethod.KV_ONLY: (250, 1e-5, 2),
    FineTuneMethod.EMBEDDING_ONLY: (1500, 5e-4, 1),
}

METHOD_SUBSETS = {
    FineTuneMethod.FULL_FINETUNE: "all",
    FineTuneMethod.KV_ONLY: "kv_cross_attention",
    FineTuneMethod.EMBEDDING_ONLY: "embedding_only",
}


class FineTuneConfig(BaseModel):
    """One downstream fine-tuning run; unset steps / lr / batch take the method defaults"""
    method: FineTuneMethod = Field(FineTuneMethod.KV_ONLY, description="Fine-tuning method")
    steps: Optional[int] = Field(None, ge=0, description="Optimizer steps")
    lr: Optional[float] = Field(None, gt=0, description="Adam learning rate")
    batch_size: Optional[int] = Field(None, ge=1, description="Images per step")
    prompt: str = Field("a photo of S* person", description="Subject prompt containing S*")
    placeholder_token: str = Field("<s*>", description="Token added for embedding_only")
    seed: int = Field(0, description="Seed of batch and (t, noise) draws")
    log_every: int = Field(250, ge=0, description="Loss logging interval")

    @model_validator(mode="after")
    def _method_defaults(self) -> "FineTuneConfig":
        steps, lr, batch_size = METHOD_DEFAULTS[self.method]
        if self.steps is None:
            self.steps = steps
        if self.lr is None:
            self.lr = lr
        if self.batch_size is None:
            self.batch_size = batch_size
        return self

    @classmethod
    def for_method(cls, method: str, **overrides) -> "FineTuneConfig":
        return cls(method=method, **overrides)


class FineTuneResult(BaseModel):
    """Fine-tuned denoiser and the prompt that addresses the learned subject"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: torch.nn.Module
    method: FineTuneMethod
    prompt: str = Field(..., description="Generation prompt (placeholder substituted for embedding_only)")
    trained_parameters: List[str] = Field(default_factory=list)
    losses: List[float] = Field(default_factory=list)
    seconds: float = 0.0

"""
Attack Data Models
"""

import json
import os
from enum import Enum
from typing import Any, Dict, List, Optional

import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..dataset.image_io import quantize_within, save_png
from ..utils.errors import ConfigError
from ..utils.file_utils import FileUtils


class AttackMode(str, Enum):
    """攻击模式"""
    CAAT = "caat"
    STATIC_PGD = "static_pgd"
    SEPARATED = "separated"
    SUBSET_VARIANT = "subset_variant"


CO_TRAIN_SUBSETS = ("kv_cross_attention", "all", "non_attention", "none")

DEFAULT_SUBSETS = {
    AttackMode.CAAT: "kv_cross_attention",
    AttackMode.STATIC_PGD: "none",
    AttackMode.SEPARATED: "kv_cross_attention",
    AttackMode.SUBSET_VARIANT: "kv_cross_attention",
}


class AttackConfig(BaseModel):
    """Hyperparameters of one attack run (defaults follow the CAAT row)"""
    mode: AttackMode = Field(AttackMode.CAAT, description="Attack variant")
    co_train_subset: Optional[str] = Field(None, description="Parameter subset co-trained during the attack")
    model_lr: float = Field(1e-5, description="Learning rate l of the co-trained parameters")
    steps: int = Field(250, ge=0, description="Step count N")
    alpha: float = Field(5e-3, description="Signed step size on delta")
    eta: float = Field(0.1, description="L-inf budget in [0, 1] pixel units")
    prompt: str = Field("a photo of a person", description="Prompt used inside the attack loss")
    seed: int = Field(0, description="Seed of the (t, noise) draws")
    block_size: int = Field(10, description="Alternation block size b (separated mode)")
    random_init: bool = Field(False, description="Start delta uniform in [-eta, eta] instead of zero")

    @model_validator(mode="after")
    def _resolve_subset(self) -> "AttackConfig":
        if self.co_train_subset is None:
            self.co_train_subset = DEFAULT_SUBSETS[self.mode]
        if self.mode == AttackMode.CAAT and self.co_train_subset != "kv_cross_attention":
            raise ValueError("mode=caat requires co_train_subset=kv_cross_attention")
        if self.mode == AttackMode.STATIC_PGD and self.co_train_subset != "none":
            raise ValueError("mode=static_pgd requires co_train_subset=none")
        return self

    @classmethod
    def from_preset(cls, name: str, **overrides: Any) -> "AttackConfig":
        if name not in ATTACK_PRESETS:
            raise ConfigError(f"Unknown attack preset: {name}", choices=sorted(ATTACK_PRESETS))
        return cls(**{**ATTACK_PRESETS[name], **overrides})


# hyperparameter rows of the compared attackers
ATTACK_PRESETS: Dict[str, Dict[str, Any]] = {
    "caat": {"mode": "caat", "steps": 250, "model_lr": 1e-5, "alpha": 5e-3, "eta": 0.1},
    "anti_dreambooth": {"mode": "separated", "steps": 50, "model_lr": 5e-7, "alpha": 5e-3, "eta": 0.05},
    "mist": {"mode": "static_pgd", "steps": 100, "model_lr": 0.0, "alpha": 2 / 255, "eta": 32 / 255},
}


class Perturbation(BaseModel):
    """delta with its budget and step settings"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    delta: torch.Tensor = Field(..., description="Same dims as the image batch")
    eta: float
    alpha: float
    steps: int

    @property
    def linf(self) -> float:
        return float(self.delta.abs().max().item()) if self.delta.numel() else 0.0


class AttackTrace(BaseModel):
    """Per-step loss values and cost accounting"""
    losses: List[float] = Field(default_factory=list, description="Loss of every backward pass")
    delta_losses: List[float] = Field(default_factory=list, description="Loss of the passes that stepped delta")
    backward_count: int = Field(0, description="Backward passes performed")
    seconds: float = Field(0.0, description="Wall clock of the loop")

    def ascent_fraction(self, window: int = 25) -> float:
        """Fraction of consecutive window means that did not decrease"""
        values = self.delta_losses
        means = [sum(values[i:i + window]) / window for i in range(0, len(values) - window + 1, window)]
        if len(means) < 2:
            return 1.0
        rises = sum(1 for a, b in zip(means, means[1:]) if b >= a)
        return rises / (len(means) - 1)


class AttackResult(BaseModel):
    """Perturbed images, the co-trained denoiser and the trace"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    images: torch.Tensor = Field(..., description="x' = x + delta in [0, 1]")
    source: torch.Tensor = Field(..., description="The clean x the budget is measured from")
    perturbation: Perturbation
    model: torch.nn.Module = Field(..., description="Denoiser after the attack (theta0 for static PGD)")
    trace: AttackTrace
    config: AttackConfig

    def sidecar(self) -> Dict[str, Any]:
        return {
            "config": json.loads(self.config.model_dump_json()),
            "seed": self.config.seed,
            "linf": self.perturbation.linf,
            "published_linf": float((self.published() - self.source).abs().max().item()),
            "backward_count": self.trace.backward_count,
            "wall_clock": self.trace.seconds,
            "final_loss": self.trace.losses[-1] if self.trace.losses else None,
        }

    def published(self) -> torch.Tensor:
        """x' on the 8-bit grid, still within eta of the clean images"""
        return quantize_within(self.images, self.source, self.perturbation.eta)

    def save(self, directory: str) -> Dict[str, Any]:
        """PNG per perturbed image plus attack.json"""
        paths = save_png(self.published(), directory)
        sidecar_path = os.path.join(directory, "attack.json")
        FileUtils.write_json_file(sidecar_path, {**self.sidecar(), "images": [os.path.basename(p) for p in paths]})
        return {"images": paths, "sidecar": sidecar_path}

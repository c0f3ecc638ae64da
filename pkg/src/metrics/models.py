"""
Metrics Data Models
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

# fixed prefix, then the plan-cell coordinates
CSV_COLUMNS: List[str] = [
    "run_id", "attack_mode", "subset", "eta", "n_perturbed", "method",
    "FR", "FS", "FID", "seconds", "backward_count",
    "grid", "seed", "subject", "countermeasure",
]

WALL_CLOCK_COLUMNS = ("seconds",)


class MetricsConfig(BaseModel):
    """Extractor training and metric settings"""
    tau: float = Field(0.5, description="Confidence threshold of the detectability proxy")
    n_generated: int = Field(16, ge=1, description="Images generated per fine-tuned model")
    extractor_epochs: int = Field(20, ge=1)
    extractor_lr: float = Field(1e-3, gt=0)
    extractor_batch_size: int = Field(64, ge=1)
    holdout_fraction: float = Field(0.2, gt=0, lt=1)
    min_accuracy: float = Field(0.9, description="Held-out accuracy below this raises")
    min_identities: int = Field(8, ge=2)
    min_per_identity: int = Field(64, ge=2)
    noise_scale: float = Field(0.05, description="random_noise standard deviation")
    quantize_bits: int = Field(6, ge=1, le=8)
    blur_kernel: int = Field(3, ge=1)
    blur_sigma: float = Field(0.05, gt=0)
    jpeg_quality: int = Field(75, ge=1, le=100)

    def countermeasure_params(self, kind: str) -> Dict[str, Any]:
        return {
            "random_noise": {"scale": self.noise_scale},
            "quantize": {"bits": self.quantize_bits},
            "gaussian_blur": {"kernel_size": self.blur_kernel, "sigma": self.blur_sigma},
            "jpeg": {"quality": self.jpeg_quality},
        }.get(kind, {})


class MetricsReport(BaseModel):
    """One evaluated (attack, fine-tune method, seed) cell"""
    run_id: str
    attack_mode: str = Field(..., description="caat | static_pgd | separated | subset_variant | clean")
    subset: str = "none"
    eta: float = 0.0
    n_perturbed: int = 0
    method: str
    fr: float = Field(..., ge=0.0, le=1.0, description="Detectability proxy (lower = stronger attack)")
    fs: float = Field(..., ge=0.0, le=1.0, description="Feature similarity to the clean photos (lower = stronger)")
    fid: float = Field(..., ge=0.0, description="FID-lite to the clean photos (higher = stronger)")
    seconds: float = 0.0
    backward_count: int = 0
    grid: str = "matrix"
    seed: int = 0
    subject: int = 0
    countermeasure: str = "none"
    extra: Optional[Dict[str, Any]] = None

    def to_row(self) -> Dict[str, Any]:
        values = self.model_dump()
        values.update(FR=self.fr, FS=self.fs, FID=self.fid)
        return {column: values[column] for column in CSV_COLUMNS}

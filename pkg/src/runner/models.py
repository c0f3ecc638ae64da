"""
Runner Data Models

Experiment plans, the cells they expand into, and report rows.
"""

import hashlib
import json
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from ..finetune.models import FineTuneMethod

CLEAN = "clean"


class AttackGrid(BaseModel):
    """One attack axis product; every combination is crossed with subjects, seeds and methods"""
    name: str = Field(..., description="Grid name, recorded in every CSV row")
    modes: List[str] = Field(default_factory=lambda: ["caat"], description="Attack modes")
    etas: List[float] = Field(default_factory=lambda: [0.1], description="L-inf budgets")
    subsets: List[Optional[str]] = Field(default_factory=lambda: [None], description="Co-train subsets (None = mode default)")
    n_perturbed: List[int] = Field(default_factory=lambda: [4], description="How many of the subject photos are perturbed")
    countermeasures: List[str] = Field(default_factory=lambda: ["none"], description="Transforms applied before fine-tuning")
    surrogate_seed: Optional[int] = Field(None, description="Attack a model pretrained with this seed instead of the victim")
    include_clean: bool = Field(True, description="Add the clean pass-through cell per method")


class ExperimentPlan(BaseModel):
    """Subjects x seeds x methods x attack grids"""
    output_dir: str = Field("runs", description="Output root")
    subjects: List[int] = Field(default_factory=lambda: [0], description="Identity ids attacked")
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], description="Seeds per cell")
    methods: List[FineTuneMethod] = Field(default_factory=lambda: list(FineTuneMethod), description="Fine-tune methods")
    grids: List[AttackGrid] = Field(default_factory=lambda: [AttackGrid(name="matrix")])
    jobs: int = Field(1, ge=1, description="Cells evaluated concurrently")


class PlanCell(BaseModel):
    """One (attack, fine-tune method, seed) evaluation"""
    grid: str
    subject: int
    seed: int
    method: FineTuneMethod
    mode: str = Field(..., description="Attack mode or 'clean'")
    subset: str = "none"
    eta: float = 0.0
    n_perturbed: int = 0
    countermeasure: str = "none"
    surrogate_seed: Optional[int] = None

    @property
    def run_id(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha1(payload.encode("utf-8")).hexdigest()[:16]

    @property
    def is_clean(self) -> bool:
        return self.mode == CLEAN

    def attack_key(self, settings: Optional[Dict[str, Any]] = None) -> str:
        """Cells sharing an attack reuse its perturbed images; `settings` are the remaining attack hyperparameters"""
        key = {"subject": self.subject, "seed": self.seed, "mode": self.mode, "subset": self.subset,
               "eta": self.eta, "surrogate_seed": self.surrogate_seed, **(settings or {})}
        return hashlib.sha1(json.dumps(key, sort_keys=True).encode("utf-8")).hexdigest()[:16]


class RunManifest(BaseModel):
    """Per-run JSON manifest"""
    run_id: str
    command: str
    config: Dict[str, Any] = Field(default_factory=dict, description="Config snapshot")
    git_describe: str = "unknown"
    wall_clock: float = 0.0
    artifacts: Dict[str, Any] = Field(default_factory=dict)
    extra: Dict[str, Any] = Field(default_factory=dict)


class TimingRow(BaseModel):
    mode: str
    steps: int
    runs: int
    mean_wall_clock: float
    mean_backward_count: float


class TrendCheck(BaseModel):
    name: str
    status: str = Field(..., description="pass | fail | skipped")
    detail: str = ""
    values: Dict[str, Any] = Field(default_factory=dict)


class MatrixSummary(BaseModel):
    completed: int = 0
    skipped: int = 0
    failed: int = 0
    csv_path: str = ""

"""
实验计划验证器

Checks a plan before any computation starts.
"""

from typing import List, Tuple

from ..attack.models import CO_TRAIN_SUBSETS, AttackMode
from ..metrics.countermeasures import COUNTERMEASURES
from .models import AttackGrid, ExperimentPlan


class PlanValidator:
    """实验计划验证器"""

    def __init__(self, subject_images: int = 4, identities: int = 10):
        self.subject_images = subject_images
        self.identities = identities
        self.errors: List[str] = []
        self.warnings: List[str] = []

    def validate(self, plan: ExperimentPlan) -> Tuple[bool, List[str], List[str]]:
        self.errors = []
        self.warnings = []

        self._validate_basic_structure(plan)
        names = []
        for grid in plan.grids:
            if grid.name in names:
                self.errors.append(f"Duplicate grid name: {grid.name}")
            names.append(grid.name)
            self._validate_grid(grid)

        return len(self.errors) == 0, self.errors, self.warnings

    def _validate_basic_structure(self, plan: ExperimentPlan):
        if not plan.seeds:
            self.errors.append("Plan needs at least one seed")
        elif len(plan.seeds) < 3:
            self.warnings.append(f"{len(plan.seeds)} seed(s); medians over 3 seeds are the default")
        if len(set(plan.seeds)) != len(plan.seeds):
            self.errors.append("Seeds must be distinct")
        if not plan.methods:
            self.errors.append("Plan needs at least one fine-tune method")
        if not plan.subjects:
            self.errors.append("Plan needs at least one subject")
        for subject in plan.subjects:
            if not 0 <= subject < self.identities:
                self.errors.append(f"Subject {subject} outside the {self.identities} corpus identities")
        if not plan.grids:
            self.errors.append("Plan has no attack grids")

    def _validate_grid(self, grid: AttackGrid):
        label = f"grid {grid.name}"
        modes = {m.value for m in AttackMode}
        for mode in grid.modes:
            if mode not in modes:
                self.errors.append(f"{label}: unknown attack mode {mode}")
        for eta in grid.etas:
            if eta <= 0:
                self.errors.append(f"{label}: eta must be positive, got {eta}")
            elif eta > 0.5:
                self.warnings.append(f"{label}: eta {eta} is far from imperceptible")
        for subset in grid.subsets:
            if subset is not None and subset not in CO_TRAIN_SUBSETS:
                self.errors.append(f"{label}: unknown co-train subset {subset}")
            if subset not in (None, "kv_cross_attention") and "caat" in grid.modes:
                self.errors.append(f"{label}: mode caat only co-trains kv_cross_attention")
            if subset not in (None, "none") and "static_pgd" in grid.modes:
                self.errors.append(f"{label}: mode static_pgd co-trains nothing")
        for count in grid.n_perturbed:
            if not 0 <= count <= self.subject_images:
                self.errors.append(f"{label}: n_perturbed {count} outside [0, {self.subject_images}]")
        for kind in grid.countermeasures:
            if kind != "none" and kind not in COUNTERMEASURES:
                self.errors.append(f"{label}: unknown countermeasure {kind}")
        if not grid.modes and not grid.include_clean:
            self.warnings.append(f"{label}: produces no cells")

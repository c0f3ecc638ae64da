"""
Lab configuration

One YAML (or TOML) file with a section per concern. `model`, `schedule` and
`dataset` are required; every other section has defaults.
"""

import os
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from ..attack.models import AttackConfig
from ..dataset.models import DatasetConfig
from ..diffusion.models import ModelConfig, SamplerConfig, ScheduleConfig
from ..finetune.models import FineTuneConfig, FineTuneMethod
from ..metrics.models import MetricsConfig
from ..utils.errors import ConfigError
from ..utils.file_utils import FileUtils
from .models import AttackGrid, ExperimentPlan

REQUIRED_SECTIONS = ("model", "schedule", "dataset")


class LoggingConfig(BaseModel):
    level: str = Field("INFO", description="loguru level")
    file: Optional[str] = Field(None, description="Log file path, rotated at 10 MB")
    console: bool = Field(True, description="Log to stderr")


class PretrainConfig(BaseModel):
    steps: int = Field(3000, ge=0)
    lr: float = Field(1e-3, gt=0)
    batch_size: int = Field(32, ge=1)
    seed: int = Field(0)
    prompt: str = Field("a photo of a person", description="Prompt paired with every corpus image")
    log_every: int = Field(100, ge=0)
    checkpoint: Optional[str] = Field(None, description="Reuse this checkpoint instead of training")


class FineTuneSection(BaseModel):
    """Shared fine-tune settings plus optional per-method overrides"""
    prompt: str = "a photo of S* person"
    placeholder_token: str = "<s*>"
    log_every: int = 250
    overrides: Dict[FineTuneMethod, Dict[str, Any]] = Field(default_factory=dict)

    def for_method(self, method: FineTuneMethod, seed: int) -> FineTuneConfig:
        return FineTuneConfig(method=method, prompt=self.prompt, placeholder_token=self.placeholder_token,
                              seed=seed, log_every=self.log_every, **self.overrides.get(method, {}))


class LabConfig(BaseModel):
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    model: ModelConfig
    schedule: ScheduleConfig
    dataset: DatasetConfig
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    attack: AttackConfig = Field(default_factory=AttackConfig)
    finetune: FineTuneSection = Field(default_factory=FineTuneSection)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    experiment: ExperimentPlan = Field(default_factory=ExperimentPlan)

    def snapshot(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def _error_paths(error: ValidationError) -> List[str]:
    return [".".join(str(part) for part in e["loc"]) for e in error.errors()]


def config_error(error: ValidationError, source: str) -> ConfigError:
    """pydantic validation failure as a config error naming the offending keys"""
    missing = [".".join(str(p) for p in err["loc"]) for err in error.errors() if err["type"] == "missing"]
    return ConfigError(f"{source}: invalid configuration: {_error_paths(error)}", missing=missing,
                       errors=[err["msg"] for err in error.errors()])


def parse_config(data: Dict[str, Any], source: str = "<config>") -> LabConfig:
    """Validate a raw mapping; missing required keys are listed in the error"""
    missing = [section for section in REQUIRED_SECTIONS if section not in data]
    if missing:
        raise ConfigError(f"{source}: missing config sections: {missing}", missing=missing)
    try:
        return LabConfig(**data)
    except ValidationError as e:
        raise config_error(e, source) from e


def load_config(path: str, seed: Optional[int] = None, out: Optional[str] = None) -> LabConfig:
    """Read config, apply .env / CAAT_OUT and the --seed / --out flags"""
    load_dotenv()
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}", missing=[path])
    config = parse_config(FileUtils.read_config_file(path), source=path)

    output_dir = out or os.getenv("CAAT_OUT") or config.experiment.output_dir
    config.experiment.output_dir = output_dir
    if seed is not None:
        config.experiment.seeds = [seed]
        config.attack.seed = seed
    return config


def parse_grid_flag(flag: str, plan: ExperimentPlan) -> AttackGrid:
    """`--grid eta=0.05,0.10;mode=caat` or the name of a grid in the plan"""
    if "=" not in flag:
        for grid in plan.grids:
            if grid.name == flag:
                return grid
        raise ConfigError(f"Unknown grid: {flag}", choices=[g.name for g in plan.grids])

    fields = {"eta": "etas", "mode": "modes", "subset": "subsets", "n_perturbed": "n_perturbed",
              "countermeasure": "countermeasures", "surrogate_seed": "surrogate_seed"}
    values: Dict[str, Any] = {}
    for part in filter(None, (p.strip() for p in flag.split(";"))):
        key, _, raw = part.partition("=")
        key = key.strip()
        if key not in fields:
            raise ConfigError(f"Unknown grid axis: {key}", choices=sorted(fields))
        items = [v.strip() for v in raw.split(",") if v.strip()]
        if not items:
            raise ConfigError(f"Grid axis {key} has no values")
        try:
            if key == "eta":
                values[fields[key]] = [float(v) for v in items]
            elif key == "n_perturbed":
                values[fields[key]] = [int(v) for v in items]
            elif key == "surrogate_seed":
                values[fields[key]] = int(items[0])
            else:
                values[fields[key]] = items
        except ValueError as e:
            raise ConfigError(f"Bad value for grid axis {key}: {raw}") from e
    name = "ablate_" + "_".join(sorted(values))
    return AttackGrid(name=name, **values)

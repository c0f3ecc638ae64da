"""
实验运行模块

Configuration, plan expansion and validation, the resumable metrics matrix and
the timing / trend reports.
"""

from .config import (
    LabConfig, LoggingConfig, PretrainConfig, config_error, load_config, parse_config, parse_grid_flag,
)
from .lab import LabContext, expand_plan, git_describe, publish
from .matrix import METRICS_CSV, run_matrix
from .models import AttackGrid, ExperimentPlan, MatrixSummary, PlanCell, RunManifest, TimingRow, TrendCheck
from .reports import collect_sidecars, timing_report, trend_report
from .validator import PlanValidator

__all__ = [
    "LabConfig", "LoggingConfig", "PretrainConfig", "config_error", "load_config", "parse_config", "parse_grid_flag",
    "LabContext", "expand_plan", "git_describe", "publish",
    "METRICS_CSV", "run_matrix",
    "AttackGrid", "ExperimentPlan", "MatrixSummary", "PlanCell", "RunManifest", "TimingRow", "TrendCheck",
    "collect_sidecars", "timing_report", "trend_report",
    "PlanValidator",
]

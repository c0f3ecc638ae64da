"""
Experiment Runner Tests
"""

import asyncio
import json
import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.finetune import FineTuneMethod
from src.metrics import CSV_COLUMNS, MetricsReport
from src.runner import (
    AttackGrid, ExperimentPlan, PlanValidator, collect_sidecars, expand_plan, load_config, parse_config,
    parse_grid_flag, publish, run_matrix, timing_report, trend_report,
)
from src.runner.reports import (
    check_budget, check_efficacy, check_perturbed_count, check_robustness, check_subset_sensitivity, check_timing,
)
from src.utils import FileUtils
from src.utils.errors import ConfigError, ReportError, TrainingError

CONFIG_DIR = Path(__file__).parent.parent / "config"
MINIMAL = {"model": {"image_size": 8, "widths": [4]}, "schedule": {"T": 10}, "dataset": {"n_identities": 2}}


class TestConfig:
    """YAML / TOML loading and overrides"""

    def test_shipped_configs_parse(self):
        full = load_config(str(CONFIG_DIR / "config.yaml"))
        assert [g.name for g in full.experiment.grids] == [
            "matrix", "budget", "perturbed_count", "subset", "robustness", "transfer"]
        assert full.attack.steps == 250
        smoke = load_config(str(CONFIG_DIR / "smoke.toml"))
        assert smoke.model.image_size == 16
        assert smoke.finetune.for_method(FineTuneMethod.KV_ONLY, seed=0).steps == 20

    def test_missing_sections(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"model": {}})
        assert info.value.missing == ["schedule", "dataset"]

    def test_invalid_values(self):
        with pytest.raises(ConfigError):
            parse_config({**MINIMAL, "model": {"widths": []}})

    def test_overrides(self, tmp_path, monkeypatch):
        path = tmp_path / "lab.yaml"
        path.write_text(json.dumps(MINIMAL))
        monkeypatch.setenv("CAAT_OUT", str(tmp_path / "env_out"))
        assert load_config(str(path)).experiment.output_dir == str(tmp_path / "env_out")
        config = load_config(str(path), seed=9, out=str(tmp_path / "flag_out"))
        assert config.experiment.output_dir == str(tmp_path / "flag_out")
        assert config.experiment.seeds == [9]
        assert config.attack.seed == 9

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.yaml"))

    def test_grid_flag(self):
        plan = ExperimentPlan(grids=[AttackGrid(name="budget", etas=[0.05])])
        grid = parse_grid_flag("eta=0.05,0.10;mode=caat,separated", plan)
        assert grid.etas == [0.05, 0.10]
        assert grid.modes == ["caat", "separated"]
        assert grid.name.startswith("ablate_")
        assert parse_grid_flag("budget", plan).etas == [0.05]
        for bad in ("colour=red", "eta=abc", "eta=", "unknown_grid"):
            with pytest.raises(ConfigError):
                parse_grid_flag(bad, plan)


class TestPlan:
    """Plan expansion and validation"""

    def setup_method(self):
        self.plan = ExperimentPlan(seeds=[0, 1], methods=["kv_only", "embedding_only"],
                                   grids=[AttackGrid(name="matrix", modes=["caat", "static_pgd"], etas=[0.05, 0.1])])

    def test_expand_plan(self):
        cells = expand_plan(self.plan)
        # per (seed, method): clean + 2 modes x 2 etas
        assert len(cells) == 2 * 2 * 5
        assert len({c.run_id for c in cells}) == len(cells)
        assert {c.subset for c in cells if c.mode == "caat"} == {"kv_cross_attention"}
        assert {c.subset for c in cells if c.mode == "static_pgd"} == {"none"}
        assert expand_plan(self.plan) == cells

    def test_duplicate_cells_collapse(self):
        grid = self.plan.grids[0]
        assert len(expand_plan(self.plan, [grid, grid])) == len(expand_plan(self.plan))

    def test_attack_shared_across_methods(self):
        cells = [c for c in expand_plan(self.plan) if c.mode == "caat" and c.eta == 0.05 and c.seed == 0]
        assert len(cells) == 2
        assert cells[0].attack_key() == cells[1].attack_key()
        assert cells[0].run_id != cells[1].run_id

    def test_attack_key_tracks_attack_settings(self):
        from src.runner import LabContext

        cell = next(c for c in expand_plan(self.plan) if c.mode == "caat")
        assert cell.attack_key({"steps": 250}) != cell.attack_key({"steps": 100})
        keys = set()
        for attack in ({}, {"steps": 5}, {"alpha": 0.01}, {"model_lr": 1e-3}):
            config = parse_config({**MINIMAL, "attack": attack})
            keys.add(LabContext(config).attack_key(cell))
        assert len(keys) == 4
        same = parse_config({**MINIMAL, "attack": {"seed": 3}})
        assert LabContext(same).attack_key(cell) == LabContext(parse_config(MINIMAL)).attack_key(cell)

    def test_validator_accepts_plan(self):
        ok, errors, warnings = PlanValidator().validate(self.plan)
        assert ok and errors == []
        assert any("seed" in w for w in warnings)

    def test_validator_errors(self):
        plan = ExperimentPlan(subjects=[12], seeds=[0, 0, 1], grids=[
            AttackGrid(name="g", modes=["caat", "glaze"], subsets=["all"], n_perturbed=[5],
                       countermeasures=["median"], etas=[0.0]),
        ])
        ok, errors, _ = PlanValidator(subject_images=4, identities=10).validate(plan)
        assert not ok
        text = " ".join(errors)
        for fragment in ("Subject 12", "distinct", "glaze", "kv_cross_attention", "n_perturbed 5",
                         "median", "eta must be positive"):
            assert fragment in text

    def test_publish_is_8_bit(self):
        images = torch.rand(2, 3, 4, 4, generator=torch.Generator().manual_seed(0))
        published = publish(images)
        levels = published * 255
        assert torch.allclose(levels, levels.round(), atol=1e-4)
        assert torch.equal(publish(published), published)


class FakeLab:
    """Stands in for LabContext: cells resolve instantly"""

    def __init__(self, plan: ExperimentPlan, failing=()):
        self.config = parse_config({**MINIMAL, "experiment": plan.model_dump(mode="json")})
        self.failing = set(failing)
        self.calls = []

    def path(self, *parts: str) -> str:
        return str(Path(self.config.experiment.output_dir, *parts))

    def prepare(self) -> None:
        pass

    def run_cell(self, cell) -> MetricsReport:
        self.calls.append(cell.run_id)
        if cell.mode in self.failing:
            raise TrainingError("loss became nan", step=3)
        return MetricsReport(run_id=cell.run_id, attack_mode=cell.mode, subset=cell.subset, eta=cell.eta,
                             n_perturbed=cell.n_perturbed, method=cell.method.value, fr=0.5, fs=0.5, fid=1.0,
                             grid=cell.grid, seed=cell.seed)


class TestMatrix:
    """Resumable matrix runs"""

    def setup_method(self):
        self.grid = AttackGrid(name="matrix", modes=["caat", "static_pgd", "separated"])

    def _plan(self, tmp_path, jobs=1) -> ExperimentPlan:
        return ExperimentPlan(output_dir=str(tmp_path), seeds=[0], methods=["kv_only"], grids=[self.grid], jobs=jobs)

    def test_rows_in_plan_order(self, tmp_path):
        lab = FakeLab(self._plan(tmp_path, jobs=3))
        summary = asyncio.run(run_matrix(lab))
        assert (summary.completed, summary.skipped, summary.failed) == (4, 0, 0)
        rows = FileUtils.read_csv_rows(summary.csv_path)
        assert [r["attack_mode"] for r in rows] == ["clean", "caat", "static_pgd", "separated"]
        assert list(rows[0]) == CSV_COLUMNS

    def test_resume_skips_finished_cells(self, tmp_path):
        asyncio.run(run_matrix(FakeLab(self._plan(tmp_path))))
        again = FakeLab(self._plan(tmp_path))
        summary = asyncio.run(run_matrix(again))
        assert summary.skipped == 4
        assert again.calls == []

    def test_failures_are_recorded_and_retried(self, tmp_path):
        summary = asyncio.run(run_matrix(FakeLab(self._plan(tmp_path), failing={"separated"})))
        assert (summary.completed, summary.failed) == (3, 1)
        failures = (tmp_path / "failures.jsonl").read_text().strip().splitlines()
        record = json.loads(failures[0])
        assert (record["error"], record["step"]) == ("training_error", 3)
        assert record["cell"]["mode"] == "separated"

        retry = FakeLab(self._plan(tmp_path))
        summary = asyncio.run(run_matrix(retry))
        assert (summary.completed, summary.skipped) == (1, 3)
        assert len(retry.calls) == 1
        assert len(FileUtils.read_csv_rows(summary.csv_path)) == 4


def _row(**values):
    row = {"grid": "matrix", "method": "kv_only", "attack_mode": "caat", "countermeasure": "none",
           "subset": "kv_cross_attention", "eta": "0.1", "n_perturbed": "4", "FID": "1.0", "FS": "0.5"}
    row.update({k: str(v) for k, v in values.items()})
    return row


def _sidecar(mode, steps, backward, seconds):
    return {"config": {"mode": mode, "steps": steps, "block_size": 10}, "backward_count": backward,
            "wall_clock": seconds}


class TestReports:
    """Timing table and trend checks"""

    def test_timing_report(self):
        table = timing_report([_sidecar("caat", 10, 10, 1.0), _sidecar("caat", 10, 10, 3.0),
                               _sidecar("separated", 10, 20, 5.0)])
        caat = next(r for r in table if r.mode == "caat")
        assert (caat.runs, caat.mean_wall_clock, caat.mean_backward_count) == (2, 2.0, 10)

    def test_timing_report_errors(self):
        with pytest.raises(ReportError):
            timing_report([])
        with pytest.raises(ReportError):
            timing_report([_sidecar("separated", 10, 10, 1.0)])
        with pytest.raises(ReportError):
            timing_report([{"config": {"mode": "caat"}}])

    def test_timing_check(self):
        fast = check_timing([_sidecar("caat", 10, 10, 1.0), _sidecar("separated", 10, 20, 3.0)])
        assert fast.status == "pass"
        slow = check_timing([_sidecar("caat", 10, 10, 2.9), _sidecar("separated", 10, 20, 3.0)])
        assert slow.status == "fail"
        assert check_timing([]).status == "skipped"

    def test_efficacy(self):
        rows = [_row(attack_mode="clean", FID=1.0, FS=0.8), _row(FID=2.0, FS=0.5)]
        assert check_efficacy(rows).status == "pass"
        rows = [_row(attack_mode="clean", FID=1.0, FS=0.8), _row(FID=1.1, FS=0.5)]
        assert check_efficacy(rows).status == "fail"
        assert check_efficacy([]).status == "skipped"

    def test_budget(self):
        rows = []
        for method, curve in (("kv_only", [1, 2, 3]), ("full_finetune", [1, 3, 4]), ("embedding_only", [3, 2, 1])):
            rows += [_row(grid="budget", method=method, eta=eta, FID=fid) for eta, fid in zip((0.05, 0.1, 0.15), curve)]
        assert check_budget(rows).status == "pass"

    def test_perturbed_count(self):
        rows = [_row(grid="perturbed_count", n_perturbed=k, FID=1.0 + k) for k in range(5)]
        result = check_perturbed_count(rows)
        assert result.status == "pass"
        assert result.values["kv_only"]["spearman"] == pytest.approx(1.0)

    def test_subset_and_robustness(self):
        rows = [_row(grid="subset", method="full_finetune", subset="kv_cross_attention", FID=2.0),
                _row(grid="subset", method="full_finetune", subset="none", attack_mode="subset_variant", FID=1.5)]
        assert check_subset_sensitivity(rows).status == "pass"
        assert check_robustness(rows).status == "skipped"

        rows = [_row(grid="robustness", method="full_finetune", attack_mode="clean", FID=1.0)]
        rows += [_row(grid="robustness", method="full_finetune", countermeasure=k, FID=fid)
                 for k, fid in (("random_noise", 2.0), ("quantize", 1.5), ("gaussian_blur", 1.2), ("jpeg", 0.9))]
        assert check_robustness(rows).status == "pass"

    def test_trend_report(self, tmp_path):
        with pytest.raises(ReportError):
            trend_report([], [])
        checks = trend_report([_row(attack_mode="clean", FID=1.0, FS=0.8), _row(FID=2.0, FS=0.5)], [])
        assert [c.name for c in checks] == ["attack_efficacy", "budget_monotonicity", "perturbed_count",
                                            "subset_sensitivity", "timing", "robustness"]

    def test_collect_sidecars(self, tmp_path):
        FileUtils.write_json_file(str(tmp_path / "attacks" / "k1" / "attack.json"), _sidecar("caat", 5, 5, 1.0))
        FileUtils.write_json_file(str(tmp_path / "attacks" / "k2" / "attack.json"), _sidecar("separated", 5, 10, 2.0))
        assert len(collect_sidecars(str(tmp_path))) == 2


def _tiny_lab_config(output_dir: Path):
    return parse_config({
        "logging": {"level": "WARNING", "console": False},
        "model": {"image_size": 8, "widths": [4], "context_dim": 4, "attn_dim": 4, "time_dim": 8},
        "schedule": {"T": 10},
        "dataset": {"n_identities": 2, "per_identity": 4, "image_size": 8},
        "sampler": {"steps": 2},
        "pretrain": {"steps": 2, "batch_size": 4},
        "attack": {"steps": 2, "alpha": 0.08},
        "finetune": {"overrides": {"kv_only": {"steps": 2}}},
        "metrics": {"n_generated": 2, "extractor_epochs": 1, "min_accuracy": 0.0,
                    "min_identities": 2, "min_per_identity": 4},
        "experiment": {"output_dir": str(output_dir), "seeds": [0], "methods": ["kv_only"],
                       "grids": [{"name": "matrix", "modes": ["caat"]}]},
    })


@pytest.mark.slow
class TestLabEndToEnd:
    """Tiny pretrain -> attack -> fine-tune -> score loop"""

    def test_matrix_on_tiny_lab(self, tmp_path):
        from src.runner import LabContext

        summary = asyncio.run(run_matrix(LabContext(_tiny_lab_config(tmp_path))))
        assert (summary.completed, summary.failed) == (2, 0)
        rows = FileUtils.read_csv_rows(summary.csv_path)
        assert [r["attack_mode"] for r in rows] == ["clean", "caat"]
        assert rows[1]["backward_count"] == "2"
        sidecars = collect_sidecars(str(tmp_path))
        assert len(sidecars) == 1 and sidecars[0]["backward_count"] == 2
        assert (tmp_path / "models" / "pretrain_seed0.ckpt").exists()
        assert (tmp_path / "runs" / rows[1]["run_id"] / "manifest.json").exists()

    def test_cached_attack_images_respect_budget(self, tmp_path):
        from src.dataset import load_folder, subject_images
        from src.runner import LabContext

        lab = LabContext(_tiny_lab_config(tmp_path))
        cell = next(c for c in expand_plan(lab.config.experiment) if c.mode == "caat")
        clean = publish(subject_images(lab.config.dataset, cell.subject))
        perturbed, sidecar = lab.attacked_images(cell, clean)
        assert (perturbed - clean).abs().max() <= cell.eta + 1e-7
        cached = load_folder(lab.path("attacks", lab.attack_key(cell)), size=8).images
        assert torch.equal(cached, perturbed)
        assert sidecar["published_linf"] <= cell.eta + 1e-7

    def test_cell_metrics_are_reproducible(self, tmp_path):
        from src.runner import LabContext

        first_lab = LabContext(_tiny_lab_config(tmp_path / "a"))
        cell = next(c for c in expand_plan(first_lab.config.experiment) if c.mode == "caat")
        first = first_lab.run_cell(cell)
        reused = LabContext(_tiny_lab_config(tmp_path / "a")).run_cell(cell)
        fresh = LabContext(_tiny_lab_config(tmp_path / "b")).run_cell(cell)
        for report in (reused, fresh):
            assert (report.fr, report.fs, report.fid) == (first.fr, first.fs, first.fid)

#!/usr/bin/env python3
"""
CAAT Desk Lab Main Program

Pretrain a small text-conditioned diffusion model, protect subject photos with
CAAT or a baseline attack, fine-tune on them as a misuser would, and measure
how much the protection degrades the fine-tuned model.
"""

import argparse
import asyncio
import hashlib
import json
import os
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger
from pydantic import ValidationError

# Add src directory to Python path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from src.attack import ATTACK_PRESETS, AttackConfig, AttackMode, run_attack
from src.autodiff import run_checks, run_op_checks
from src.dataset import load_folder, save_grid, save_png, subject_images
from src.diffusion import load_checkpoint, save_checkpoint
from src.diffusion.gradchecks import MODEL_CHECKS
from src.finetune import FineTuneMethod, finetune, generate_subject
from src.metrics import CSV_COLUMNS, score_generations
from src.runner import (
    LabContext, PlanValidator, RunManifest, collect_sidecars, config_error, git_describe, load_config,
    parse_grid_flag, publish, run_matrix, timing_report, trend_report,
)
from src.utils import CAATError, FileUtils, setup_logging
from src.utils.errors import UsageError

COMMANDS = ["pretrain", "attack", "finetune", "generate", "evaluate", "ablate", "gradcheck", "report"]
GRADCHECK_TOLERANCE = 1e-4


class CAATLab:
    """Main class of the desk lab"""

    def __init__(self, config_path: str = "config/config.yaml", seed: Optional[int] = None,
                 out: Optional[str] = None, jobs: Optional[int] = None):
        self.config = load_config(config_path, seed=seed, out=out)
        if jobs is not None:
            self.config.experiment.jobs = jobs
        log = self.config.logging
        setup_logging(log.level, log.file, log.console)
        self.seed = seed if seed is not None else self.config.experiment.seeds[0]
        self.lab = LabContext(self.config)
        self.output_dir = self.config.experiment.output_dir

    def _write_manifest(self, command: str, args: Dict[str, Any], started: float,
                        artifacts: Dict[str, Any], extra: Optional[Dict[str, Any]] = None) -> str:
        payload = json.dumps({"command": command, "args": args, "seed": self.seed}, sort_keys=True, default=str)
        run_id = hashlib.sha1(payload.encode("utf-8")).hexdigest()[:16]
        manifest = RunManifest(run_id=run_id, command=command, config=self.config.snapshot(),
                               git_describe=git_describe(), wall_clock=time.perf_counter() - started,
                               artifacts=artifacts, extra={"args": args, **(extra or {})})
        path = self.lab.path("manifests", f"{command}_{run_id}.json")
        FileUtils.write_json_file(path, manifest.model_dump())
        return path

    def _photos(self, images: Optional[str], subject: Optional[int]):
        if images and subject is not None:
            raise UsageError("--images and --subject are mutually exclusive")
        if images:
            return load_folder(images, size=self.config.model.image_size).images
        return publish(subject_images(self.config.dataset, subject or 0))

    async def pretrain(self, pretrain_seed: Optional[int]) -> str:
        started = time.perf_counter()
        seed = self.config.pretrain.seed if pretrain_seed is None else pretrain_seed
        print(f"🏋️  Pretraining denoiser (seed={seed}, steps={self.config.pretrain.steps})...")
        await asyncio.to_thread(self.lab.pretrained, seed)
        path = self.lab.checkpoint_path(seed)
        print(f"✅ Checkpoint: {path}")
        self._write_manifest("pretrain", {"seed": seed}, started, {"checkpoint": path})
        return path

    async def attack(self, mode: Optional[str], preset: Optional[str], eta: Optional[float],
                     steps: Optional[int], images: Optional[str], subject: Optional[int]) -> str:
        started = time.perf_counter()
        if mode and preset:
            raise UsageError("--mode and --preset are mutually exclusive")
        overrides = {k: v for k, v in {"eta": eta, "steps": steps}.items() if v is not None}
        if preset:
            cfg = AttackConfig.from_preset(preset, seed=self.config.attack.seed, prompt=self.config.attack.prompt,
                                           **overrides)
        else:
            base = self.config.attack.model_dump()
            if mode:
                base.update(mode=mode, co_train_subset=None)
            cfg = AttackConfig(**{**base, **overrides})

        photos = self._photos(images, subject)
        model = await asyncio.to_thread(self.lab.pretrained)
        print(f"🛡️  Running {cfg.mode.value} attack: N={cfg.steps}, eta={cfg.eta}, alpha={cfg.alpha}")
        result = await asyncio.to_thread(run_attack, photos, model, cfg, self.lab.sched)
        directory = self.lab.path("attack", f"{cfg.mode.value}_seed{cfg.seed}")
        saved = result.save(directory)
        print(f"✅ {len(saved['images'])} perturbed images -> {directory} "
              f"(linf {result.perturbation.linf:.4f}, {result.trace.backward_count} backward passes)")
        self._write_manifest("attack", cfg.model_dump(mode="json"), started, saved)
        return directory

    async def finetune(self, method: str, images: Optional[str], subject: Optional[int], output: Optional[str]) -> str:
        started = time.perf_counter()
        photos = self._photos(images, subject)
        ft_cfg = self.config.finetune.for_method(FineTuneMethod(method), self.seed)
        model = await asyncio.to_thread(self.lab.pretrained)
        print(f"🎯 Fine-tuning ({method}, {ft_cfg.steps} steps, lr={ft_cfg.lr}) on {photos.shape[0]} images...")
        result = await asyncio.to_thread(finetune, photos, model, ft_cfg, self.lab.sched)
        path = output or self.lab.path("finetune", f"{method}_seed{self.seed}.ckpt")
        save_checkpoint(result.model, path, {"method": method, "prompt": result.prompt, "seed": self.seed})
        print(f"✅ Fine-tuned checkpoint: {path} (prompt: '{result.prompt}')")
        self._write_manifest("finetune", {"method": method, "images": images, "subject": subject}, started,
                             {"checkpoint": path})
        return path

    async def generate(self, checkpoint: Optional[str], prompt: Optional[str], n: int, output: Optional[str]) -> str:
        started = time.perf_counter()
        if checkpoint:
            model = load_checkpoint(checkpoint, self.config.model)
            meta = FileUtils.load_metadata(checkpoint) or {}
            prompt = prompt or meta.get("prompt")
        else:
            model = await asyncio.to_thread(self.lab.pretrained)
        prompt = prompt or self.config.pretrain.prompt
        print(f"🎨 Generating {n} images for '{prompt}'...")
        batch = await asyncio.to_thread(generate_subject, model, prompt, self.lab.sched, n, self.seed,
                                        self.config.sampler)
        directory = output or self.lab.path("generate", f"seed{self.seed}")
        paths = save_png(batch, directory)
        grid = save_grid(batch, os.path.join(directory, "grid.png"))
        print(f"✅ Images saved to: {directory}")
        self._write_manifest("generate", {"checkpoint": checkpoint, "prompt": prompt, "n": n}, started,
                             {"images": paths, "grid": grid})
        return directory

    async def evaluate(self, generated: str, references: Optional[str], subject: Optional[int]) -> Dict[str, float]:
        started = time.perf_counter()
        batch = load_folder(generated, size=self.config.model.image_size).images
        refs = self._photos(references, subject)
        extractor = await asyncio.to_thread(self.lab.extractor)
        fr, fs, fid = score_generations(batch, refs, extractor, tau=self.config.metrics.tau)
        scores = {"FR": fr, "FS": fs, "FID": fid}
        print(f"📊 FR={fr:.3f}  FS={fs:.3f}  FID-lite={fid:.3f}  (extractor accuracy {extractor.accuracy:.3f})")
        self._write_manifest("evaluate", {"generated": generated, "references": references, "subject": subject},
                             started, {}, {"metrics": scores})
        return scores

    async def ablate(self, grid_flags: List[str]) -> int:
        started = time.perf_counter()
        plan = self.config.experiment
        grids = [parse_grid_flag(flag, plan) for flag in grid_flags] if grid_flags else None
        check = plan.model_copy(update={"grids": grids or plan.grids})
        validator = PlanValidator(self.config.dataset.subject_images, self.config.dataset.n_identities)
        is_valid, errors, warnings = validator.validate(check)
        if warnings:
            print("⚠️  Warning:")
            for warning in warnings:
                print(f"  - {warning}")
        if not is_valid:
            print("❌ Plan validation failed:")
            for error in errors:
                print(f"  - {error}")
            raise UsageError("Plan validation failed", errors=errors)

        print(f"🧪 Running grids: {[g.name for g in check.grids]} with {self.config.experiment.jobs} job(s)")
        summary = await run_matrix(self.lab, grids)
        print(f"✅ {summary.completed} cells completed, {summary.skipped} skipped, {summary.failed} failed")
        print(f"📄 Metrics: {summary.csv_path}  columns: {', '.join(CSV_COLUMNS[:11])} ...")
        self._write_manifest("ablate", {"grids": grid_flags}, started, {"csv": summary.csv_path},
                             {"summary": summary.model_dump()})
        return 1 if summary.failed else 0

    async def gradcheck(self) -> int:
        started = time.perf_counter()
        print("🔬 Checking gradients against central finite differences (64-bit)...")
        results = await asyncio.to_thread(run_op_checks, GRADCHECK_TOLERANCE, 1e-5, self.seed)
        results += await asyncio.to_thread(run_checks, MODEL_CHECKS, GRADCHECK_TOLERANCE, 1e-4, self.seed)
        for r in results:
            mark = "✅" if r.passed else "❌"
            print(f"  {mark} {r.name:<18} d/d{r.variable:<6} max rel error {r.max_rel_error:.2e}")
        failed = [f"{r.name}/{r.variable}" for r in results if not r.passed]
        self._write_manifest("gradcheck", {"tolerance": GRADCHECK_TOLERANCE}, started, {},
                             {"results": [r.model_dump() for r in results]})
        if failed:
            print(f"❌ {len(failed)} gradient check(s) failed: {failed}")
            return 1
        print(f"✅ All {len(results)} gradient checks passed")
        return 0

    async def report(self) -> int:
        started = time.perf_counter()
        rows = FileUtils.read_csv_rows(self.lab.path("metrics.csv"))
        sidecars = collect_sidecars(self.output_dir)
        timing = timing_report(sidecars) if sidecars else []
        trends = trend_report(rows, sidecars)
        print("⏱️  Timing:")
        for row in timing:
            print(f"  - {row.mode:<15} N={row.steps:<4} runs={row.runs:<3} "
                  f"wall={row.mean_wall_clock:7.1f}s backward={row.mean_backward_count:.0f}")
        print("📈 Trends:")
        icons = {"pass": "✅", "fail": "❌", "skipped": "⏭️ "}
        for check in trends:
            print(f"  {icons[check.status]} {check.name}: {check.detail}")
        path = self.lab.path("report.json")
        FileUtils.write_json_file(path, {"timing": [r.model_dump() for r in timing],
                                         "trends": [c.model_dump() for c in trends]})
        self._write_manifest("report", {}, started, {"report": path})
        return 1 if any(c.status == "fail" for c in trends) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="CAAT desk lab")
    parser.add_argument("command", choices=COMMANDS, help="Command to execute")
    parser.add_argument("--config", "-c", default="config/config.yaml", help="Path to YAML or TOML config")
    parser.add_argument("--seed", type=int, help="Seed override")
    parser.add_argument("--out", "-o", help="Output root (overrides CAAT_OUT and experiment.output_dir)")
    parser.add_argument("--jobs", "-j", type=int, help="Concurrent matrix cells")
    parser.add_argument("--mode", choices=[m.value for m in AttackMode], help="Attack mode (attack)")
    parser.add_argument("--preset", choices=sorted(ATTACK_PRESETS), help="Attack hyperparameter preset (attack)")
    parser.add_argument("--eta", type=float, help="L-inf budget (attack)")
    parser.add_argument("--steps", type=int, help="Attack steps N (attack)")
    parser.add_argument("--method", choices=[m.value for m in FineTuneMethod], help="Fine-tune method")
    parser.add_argument("--images", help="Folder of input photos")
    parser.add_argument("--subject", type=int, help="Synthetic subject id")
    parser.add_argument("--checkpoint", help="Denoiser checkpoint (generate)")
    parser.add_argument("--prompt", help="Generation prompt")
    parser.add_argument("--n", type=int, default=16, help="Images to generate")
    parser.add_argument("--generated", help="Folder of generated images (evaluate)")
    parser.add_argument("--references", help="Folder of clean reference photos (evaluate)")
    parser.add_argument("--grid", action="append", default=[], help="Grid name or axis spec, e.g. eta=0.05,0.10,0.15")
    parser.add_argument("--pretrain-seed", type=int, help="Seed of the model to pretrain")
    parser.add_argument("--output", help="Output path (finetune checkpoint / generate folder)")
    return parser


async def dispatch(lab: CAATLab, args: argparse.Namespace) -> int:
    if args.command == "pretrain":
        await lab.pretrain(args.pretrain_seed)
    elif args.command == "attack":
        await lab.attack(args.mode, args.preset, args.eta, args.steps, args.images, args.subject)
    elif args.command == "finetune":
        if not args.method:
            raise UsageError("finetune needs --method")
        await lab.finetune(args.method, args.images, args.subject, args.output)
    elif args.command == "generate":
        if args.n <= 0:
            raise UsageError("--n must be positive")
        await lab.generate(args.checkpoint, args.prompt, args.n, args.output)
    elif args.command == "evaluate":
        if not args.generated:
            raise UsageError("evaluate needs --generated")
        await lab.evaluate(args.generated, args.references, args.subject)
    elif args.command == "ablate":
        return await lab.ablate(args.grid)
    elif args.command == "gradcheck":
        return await lab.gradcheck()
    elif args.command == "report":
        return await lab.report()
    return 0


def _fail(error: CAATError, out: Optional[str]) -> int:
    record = error.to_record()
    print(json.dumps(record), file=sys.stderr)
    if out:
        try:
            FileUtils.write_json_file(os.path.join(out, "error.json"), record)
        except CAATError as e:
            logger.warning(f"Could not write error record to {out}: {e.message}")
    return 2 if isinstance(error, UsageError) else 1


async def main(argv: Optional[List[str]] = None) -> int:
    """Main function"""
    args = build_parser().parse_args(argv)
    out = args.out or os.getenv("CAAT_OUT")
    try:
        lab = CAATLab(args.config, seed=args.seed, out=args.out, jobs=args.jobs)
        out = lab.output_dir
        return await dispatch(lab, args)
    except CAATError as e:
        print(f"❌ {e.message}")
        return _fail(e, out)
    except ValidationError as e:
        error = config_error(e, f"{args.command} flags")
        print(f"❌ {error.message}")
        return _fail(error, out)
    except Exception as e:
        print(f"❌ Unexpected error: {e}")
        return _fail(CAATError(str(e), exception=type(e).__name__), out)


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))

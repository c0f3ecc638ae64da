"""
Experiment context and the per-cell pipeline

A cell publishes the subject's photos (clean, or with the first k perturbed),
optionally applies a countermeasure, fine-tunes the victim denoiser on them,
generates 16 images and scores them against the clean photos.
"""

import os
import subprocess
import threading
import time
from collections import defaultdict
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
from loguru import logger

from ..attack.attacker import run_attack
from ..attack.models import DEFAULT_SUBSETS, AttackConfig, AttackMode
from ..dataset.image_io import load_folder, save_grid, save_png, to_uint8
from ..dataset.models import CorpusDataset
from ..dataset.synthetic import build_corpus, subject_images
from ..diffusion.checkpoint import load_checkpoint, save_checkpoint
from ..diffusion.models import NoiseSchedule
from ..diffusion.schedule import build_schedule
from ..diffusion.trainer import pretrain
from ..diffusion.unet import ConditionalUNet, build_denoiser
from ..finetune.finetuner import finetune, generate_subject
from ..metrics.countermeasures import apply_countermeasure, jpeg_backend
from ..metrics.extractor import FeatureExtractor, load_extractor, save_extractor, train_feature_extractor
from ..metrics.models import MetricsReport
from ..metrics.scores import score_generations
from ..utils.file_utils import FileUtils
from .config import LabConfig
from .models import CLEAN, AttackGrid, ExperimentPlan, PlanCell, RunManifest

# model construction touches the global RNG inside fork_rng
_BUILD_LOCK = threading.Lock()

# attack hyperparameters not carried by a plan cell
ATTACK_SETTINGS = {"steps", "alpha", "model_lr", "prompt", "block_size", "random_init"}


def git_describe() -> str:
    try:
        result = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                                capture_output=True, text=True, timeout=5, check=False)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return result.stdout.strip() or "unknown"


def publish(images: torch.Tensor) -> torch.Tensor:
    """The 8-bit photos a subject actually posts"""
    array = to_uint8(images).astype(np.float32) / 255.0
    return torch.from_numpy(array.transpose(0, 3, 1, 2).copy())


def expand_plan(plan: ExperimentPlan, grids: Optional[List[AttackGrid]] = None) -> List[PlanCell]:
    """Every cell of the plan in a fixed order, deduplicated by run_id"""
    cells: List[PlanCell] = []
    for grid in grids or plan.grids:
        for subject in plan.subjects:
            for seed in plan.seeds:
                for method in plan.methods:
                    if grid.include_clean:
                        cells.append(PlanCell(grid=grid.name, subject=subject, seed=seed, method=method, mode=CLEAN))
                    for mode in grid.modes:
                        for eta in grid.etas:
                            for subset in grid.subsets:
                                for count in grid.n_perturbed:
                                    for countermeasure in grid.countermeasures:
                                        cells.append(PlanCell(
                                            grid=grid.name, subject=subject, seed=seed, method=method,
                                            mode=mode, subset=subset or DEFAULT_SUBSETS[AttackMode(mode)],
                                            eta=eta, n_perturbed=count, countermeasure=countermeasure,
                                            surrogate_seed=grid.surrogate_seed,
                                        ))
    unique: Dict[str, PlanCell] = {}
    for cell in cells:
        unique.setdefault(cell.run_id, cell)
    return list(unique.values())


class LabContext:
    """Shared, lazily built state of one experiment: schedule, corpus, pretrained models, extractor"""

    def __init__(self, config: LabConfig):
        self.config = config
        self.output_dir = config.experiment.output_dir
        self.sched: NoiseSchedule = build_schedule(config.schedule.T, config.schedule.beta_start,
                                                   config.schedule.beta_end)
        self._corpus: Optional[CorpusDataset] = None
        self._models: Dict[int, ConditionalUNet] = {}
        self._extractor: Optional[FeatureExtractor] = None
        self._guard = threading.Lock()
        self._locks: Dict[str, threading.Lock] = defaultdict(threading.Lock)

    def path(self, *parts: str) -> str:
        return os.path.join(self.output_dir, *parts)

    def _lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks[key]

    # shared artifacts

    def corpus(self) -> CorpusDataset:
        with self._lock("corpus"):
            if self._corpus is None:
                self._corpus = build_corpus(self.config.dataset)
                FileUtils.write_json_file(self.path("corpus_manifest.json"), self._corpus.manifest)
            return self._corpus

    def checkpoint_path(self, seed: int) -> str:
        if seed == self.config.pretrain.seed and self.config.pretrain.checkpoint:
            return self.config.pretrain.checkpoint
        return self.path("models", f"pretrain_seed{seed}.ckpt")

    def pretrained(self, seed: Optional[int] = None) -> ConditionalUNet:
        """Pretrained denoiser for a seed, loaded from disk when already trained"""
        seed = self.config.pretrain.seed if seed is None else seed
        with self._lock(f"pretrain:{seed}"):
            if seed in self._models:
                return self._models[seed]
            path = self.checkpoint_path(seed)
            if os.path.exists(path):
                logger.info(f"Loading pretrained denoiser {path}")
                model = load_checkpoint(path, self.config.model)
            else:
                model = self._pretrain(seed, path)
            self._models[seed] = model
            return model

    def _pretrain(self, seed: int, path: str) -> ConditionalUNet:
        cfg = self.config.pretrain
        corpus = self.corpus()
        with _BUILD_LOCK:
            initial = build_denoiser(self.config.model, seed=seed)
        logger.info(f"Pretraining denoiser seed={seed} for {cfg.steps} steps on {corpus.images.shape[0]} images")
        result = pretrain(corpus.images, initial, initial.vocabulary.to_ids(cfg.prompt), self.sched,
                          steps=cfg.steps, lr=cfg.lr, batch_size=cfg.batch_size, seed=seed, log_every=cfg.log_every)
        save_checkpoint(result.model, path, {"seed": seed, "steps": cfg.steps, "losses_head": result.losses[:50],
                                             "losses_tail": result.losses[-50:], "seconds": result.seconds})
        return result.model

    def extractor(self) -> FeatureExtractor:
        with self._lock("extractor"):
            if self._extractor is None:
                path = self.path("models", "extractor.ckpt")
                if os.path.exists(path):
                    self._extractor = load_extractor(path)
                else:
                    corpus = self.corpus()
                    with _BUILD_LOCK:
                        self._extractor = train_feature_extractor(corpus.images, corpus.labels,
                                                                  seed=self.config.dataset.root_seed,
                                                                  config=self.config.metrics)
                    save_extractor(self._extractor, path)
            return self._extractor

    def prepare(self) -> None:
        self.pretrained()
        self.extractor()

    # per-cell pipeline

    def attack_config(self, mode: str, subset: Optional[str], eta: float, seed: int) -> AttackConfig:
        base = self.config.attack.model_dump(exclude={"mode", "co_train_subset", "eta", "seed"})
        return AttackConfig(mode=mode, co_train_subset=subset, eta=eta, seed=seed, **base)

    def attack_key(self, cell: PlanCell) -> str:
        return cell.attack_key(self.config.attack.model_dump(mode="json", include=ATTACK_SETTINGS))

    def attacked_images(self, cell: PlanCell, clean: torch.Tensor) -> Tuple[torch.Tensor, Dict]:
        """Published perturbed photos for the cell's attack, computed once per attack key"""
        key = self.attack_key(cell)
        directory = self.path("attacks", key)
        with self._lock(f"attack:{key}"):
            sidecar_path = os.path.join(directory, "attack.json")
            if os.path.exists(sidecar_path):
                return load_folder(directory, size=self.config.dataset.image_size).images, \
                    FileUtils.read_json_file(sidecar_path)
            cfg = self.attack_config(cell.mode, cell.subset, cell.eta, cell.seed)
            target = self.pretrained(cell.surrogate_seed)
            result = run_attack(clean, target, cfg, self.sched)
            result.save(directory)
            sidecar = {**FileUtils.read_json_file(sidecar_path),
                       "surrogate_seed": cell.surrogate_seed, "subject": cell.subject}
            FileUtils.write_json_file(sidecar_path, sidecar)
            return result.published(), sidecar

    def run_cell(self, cell: PlanCell) -> MetricsReport:
        start = time.perf_counter()
        run_dir = self.path("runs", cell.run_id)
        clean = publish(subject_images(self.config.dataset, cell.subject))

        sidecar: Dict = {}
        photos = clean
        if not cell.is_clean:
            perturbed, sidecar = self.attacked_images(cell, clean)
            k = cell.n_perturbed
            photos = torch.cat([perturbed[:k], clean[k:]])
        params = self.config.metrics.countermeasure_params(cell.countermeasure)
        photos = apply_countermeasure(photos, cell.countermeasure, params, seed=cell.seed)

        ft_cfg = self.config.finetune.for_method(cell.method, cell.seed)
        tuned = finetune(photos, self.pretrained(), ft_cfg, self.sched)
        generated = generate_subject(tuned.model, tuned.prompt, self.sched, n=self.config.metrics.n_generated,
                                     seed=cell.seed, sampler=self.config.sampler)
        fr, fs, fid = score_generations(generated, clean, self.extractor(), tau=self.config.metrics.tau)

        images = save_png(generated, os.path.join(run_dir, "generated"))
        grid_path = save_grid(generated, os.path.join(run_dir, "generated_grid.png"))
        report = MetricsReport(
            run_id=cell.run_id, attack_mode=cell.mode, subset=cell.subset, eta=cell.eta,
            n_perturbed=0 if cell.is_clean else cell.n_perturbed, method=cell.method.value,
            fr=fr, fs=fs, fid=fid,
            seconds=float(sidecar.get("wall_clock", 0.0)), backward_count=int(sidecar.get("backward_count", 0)),
            grid=cell.grid, seed=cell.seed, subject=cell.subject, countermeasure=cell.countermeasure,
        )
        manifest = RunManifest(
            run_id=cell.run_id, command="matrix", config=self.config.snapshot(), git_describe=git_describe(),
            wall_clock=time.perf_counter() - start,
            artifacts={"generated": images, "grid": grid_path,
                       "attack": self.path("attacks", self.attack_key(cell)) if not cell.is_clean else None},
            extra={"cell": cell.model_dump(mode="json"), "metrics": report.to_row(),
                   "jpeg_backend": jpeg_backend() if cell.countermeasure == "jpeg" else None},
        )
        FileUtils.write_json_file(os.path.join(run_dir, "manifest.json"), manifest.model_dump())
        logger.info(f"[{cell.grid}] {cell.mode}/{cell.method.value} seed={cell.seed} "
                    f"FR={fr:.3f} FS={fs:.3f} FID={fid:.3f}")
        return report

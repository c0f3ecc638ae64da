"""
Reference Baseline Tests

Full-size run of config/config.yaml checked against config/baseline.yaml.
"""

import sys
from pathlib import Path

import pytest
import torch
from loguru import logger

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.attack import AttackMode, run_attack
from src.dataset import build_corpus, subject_images
from src.diffusion import build_denoiser, build_schedule, pretrain
from src.finetune import FineTuneMethod, finetune, generate_subject
from src.metrics import fid_lite, fr_proxy, fs_proxy, train_feature_extractor
from src.runner import load_config, publish
from src.utils import FileUtils

ROOT = Path(__file__).parent.parent
BASELINE = FileUtils.read_yaml_file(str(ROOT / "config" / "baseline.yaml"))


@pytest.fixture(scope="module")
def reference_run():
    """Pretrained denoiser, extractor and clean subject photos of the reference config"""
    config = load_config(str(ROOT / BASELINE["config"]))
    ref = BASELINE["reference"]
    sched = build_schedule(config.schedule.T, config.schedule.beta_start, config.schedule.beta_end)
    corpus = build_corpus(config.dataset)
    initial = build_denoiser(config.model, seed=ref["pretrain_seed"])
    trained = pretrain(corpus.images, initial, initial.vocabulary.to_ids(config.pretrain.prompt), sched,
                       steps=config.pretrain.steps, lr=config.pretrain.lr, batch_size=config.pretrain.batch_size,
                       seed=ref["pretrain_seed"], log_every=config.pretrain.log_every)
    extractor = train_feature_extractor(corpus.images, corpus.labels, seed=config.dataset.root_seed,
                                        config=config.metrics)
    clean = publish(subject_images(config.dataset, ref["subject"]))
    return {"config": config, "sched": sched, "corpus": corpus, "trained": trained,
            "extractor": extractor, "clean": clean}


@pytest.mark.slow
class TestReferenceBaseline:
    """Thresholds pinned for the reference run"""

    def test_pretrain_loss_drops(self, reference_run):
        limits = BASELINE["pretrain"]
        trained = reference_run["trained"]
        initial = trained.running_loss(limits["window"], at_end=False)
        final = trained.running_loss(limits["window"], at_end=True)
        logger.info(f"pretrain running loss {initial:.4f} -> {final:.4f}")
        assert final < limits["loss_ratio_max"] * initial

    @pytest.mark.parametrize("seed", BASELINE["reference"]["seeds"])
    def test_clean_finetune_learns_subject(self, reference_run, seed):
        config, sched = reference_run["config"], reference_run["sched"]
        clean, extractor = reference_run["clean"], reference_run["extractor"]
        pretrained = reference_run["trained"].model
        method = FineTuneMethod(BASELINE["reference"]["method"])

        tuned = finetune(clean, pretrained, config.finetune.for_method(method, seed), sched)
        after = generate_subject(tuned.model, tuned.prompt, sched, n=config.metrics.n_generated,
                                 seed=seed, sampler=config.sampler)
        before = generate_subject(pretrained, tuned.prompt, sched, n=config.metrics.n_generated,
                                  seed=seed, sampler=config.sampler)

        assert fs_proxy(after, clean, extractor) > BASELINE["finetune"]["clean_fs_min"]
        # fine-tuning on unperturbed photos moves generations toward the subject
        assert fid_lite(after, clean, extractor) < fid_lite(before, clean, extractor)

    def test_uniform_noise_detectability(self, reference_run):
        pinned = BASELINE["metrics"]
        config, extractor = reference_run["config"], reference_run["extractor"]
        size = config.dataset.image_size
        gen = torch.Generator().manual_seed(pinned["uniform_noise_seed"])
        noise = torch.rand(pinned["uniform_noise_count"], 3, size, size, generator=gen)

        fr = fr_proxy(noise, extractor, tau=config.metrics.tau)
        logger.info(f"uniform-noise FR {fr:.4f}")
        if pinned["uniform_noise_fr"] is None:
            assert fr < fr_proxy(reference_run["corpus"].images, extractor, tau=config.metrics.tau)
        else:
            assert fr == pytest.approx(pinned["uniform_noise_fr"], abs=pinned["uniform_noise_fr_tolerance"])

    def test_caat_wall_clock(self, reference_run):
        config = reference_run["config"]
        cfg = config.attack.model_copy(update={"mode": AttackMode.CAAT})
        result = run_attack(reference_run["clean"], reference_run["trained"].model, cfg, reference_run["sched"])
        assert cfg.steps == 250
        assert result.trace.seconds < BASELINE["attack"]["caat_wall_clock_max_s"]
        assert (result.published() - reference_run["clean"]).abs().max() <= cfg.eta + 1e-7

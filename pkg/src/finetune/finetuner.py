"""
Customized fine-tuning harnesses

The three downstream methods a would-be misuser runs on a subject's published
photos, and generation from the result.
"""

import copy
import time
from typing import Optional

import torch
from loguru import logger

from ..diffusion.freezing import assert_frozen, parameter_bytes
from ..diffusion.models import SUBJECT_TOKEN, NoiseSchedule, SamplerConfig
from ..diffusion.sampling import sample
from ..diffusion.trainer import train_denoiser
from ..diffusion.unet import ConditionalUNet
from ..utils.errors import ConfigError, ContractViolation, FreezeViolation
from .models import METHOD_SUBSETS, FineTuneConfig, FineTuneMethod, FineTuneResult


def _row_keeper(model: ConditionalUNet, keep_index: int):
    """after_step hook restoring every embedding row except `keep_index`"""
    original = model.token_embedding.weight.detach().clone()
    frozen = torch.arange(original.shape[0]) != keep_index

    def restore(m: ConditionalUNet) -> None:
        with torch.no_grad():
            m.token_embedding.weight[frozen] = original[frozen]

    return restore, original, frozen


def finetune(images: torch.Tensor, model: ConditionalUNet, cfg: FineTuneConfig, sched: NoiseSchedule) -> FineTuneResult:
    """Adam on the method's parameter set of a copy of `model`; everything else stays byte-identical"""
    if images.numel() and (images.min() < 0 or images.max() > 1):
        raise ContractViolation("Fine-tuning images must lie in [0, 1]")
    if SUBJECT_TOKEN not in cfg.prompt.split():
        raise ConfigError(f"Subject prompt must contain {SUBJECT_TOKEN}: {cfg.prompt!r}")

    start = time.perf_counter()
    tuned = copy.deepcopy(model)
    prompt = cfg.prompt
    after_step = None
    rows = None
    if cfg.method == FineTuneMethod.EMBEDDING_ONLY:
        index = tuned.extend_vocabulary(cfg.placeholder_token)
        prompt = " ".join(cfg.placeholder_token if w == SUBJECT_TOKEN else w for w in cfg.prompt.split())
        after_step, original, frozen = _row_keeper(tuned, index)
        rows = (original, frozen)

    names = tuned.subset_names(METHOD_SUBSETS[cfg.method])
    before = parameter_bytes(tuned)
    token_ids = tuned.vocabulary.to_ids(prompt)
    losses = train_denoiser(
        tuned, images, token_ids, sched, names,
        steps=cfg.steps, lr=cfg.lr, batch_size=cfg.batch_size, seed=cfg.seed,
        after_step=after_step, label=f"finetune[{cfg.method.value}]", log_every=cfg.log_every,
    )
    assert_frozen(before, tuned, names, label=cfg.method.value)
    if rows is not None:
        original, frozen = rows
        if not torch.equal(tuned.token_embedding.weight.detach()[frozen], original[frozen]):
            raise FreezeViolation("embedding_only changed rows other than the placeholder",
                                  parameters=["token_embedding.weight"])

    seconds = time.perf_counter() - start
    logger.info(f"finetune[{cfg.method.value}] {cfg.steps} steps in {seconds:.1f}s")
    return FineTuneResult(model=tuned, method=cfg.method, prompt=prompt, trained_parameters=names,
                          losses=losses, seconds=seconds)


def generate_subject(
    model: ConditionalUNet,
    prompt: str,
    sched: NoiseSchedule,
    n: int = 16,
    seed: int = 0,
    sampler: Optional[SamplerConfig] = None,
) -> torch.Tensor:
    """n images of the subject, deterministic per seed"""
    sampler = sampler or SamplerConfig()
    model.eval()
    return sample(
        model, model.vocabulary.to_ids(prompt), sched, n, seed,
        sampler=sampler.sampler, steps=sampler.steps, image_shape=model.config.image_shape,
    )

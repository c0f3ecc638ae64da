"""
CAAT and baseline attacks

All variants share one loop. Each step draws fresh (t, noise) from the attack
seed, evaluates the noise-prediction loss at (theta, x + delta) once, then
  theta_S <- theta_S - l * grad_S        (co-trained subset S, when stepping theta)
  delta   <- clip(delta + alpha * sign(grad_x), -eta, eta)   (when stepping delta)
with x + delta kept inside [0, 1]. The variants differ only in S and in which
of the two updates a step performs.
"""

import copy
import time
from typing import Callable, Dict, List, Tuple

import torch
from loguru import logger
from torch.func import functional_call

from ..autodiff.core import evaluate_with_grads
from ..diffusion.freezing import assert_frozen, parameter_bytes
from ..diffusion.losses import ldm_loss
from ..diffusion.models import NoiseSchedule
from ..diffusion.unet import ConditionalUNet
from ..utils.errors import AttackFailure, ConfigError, ContractViolation
from .models import CO_TRAIN_SUBSETS, AttackConfig, AttackMode, AttackResult, AttackTrace, Perturbation

# (step theta, step delta) per backward pass
StepPlan = List[Tuple[bool, bool]]

INPUT = "x"


def clip_delta(delta: torch.Tensor, eta: float) -> torch.Tensor:
    """Elementwise clamp to [-eta, eta]"""
    if eta <= 0:
        raise ConfigError(f"eta must be positive, got {eta}", eta=eta)
    return delta.clamp(-eta, eta)


def _project(x: torch.Tensor, delta: torch.Tensor, eta: float) -> torch.Tensor:
    # keep x + delta inside [0, 1]; an in-range component is left bit-exact
    delta = clip_delta(delta, eta)
    return torch.maximum(torch.minimum(delta, 1.0 - x), -x)


def _check_inputs(x: torch.Tensor, cfg: AttackConfig) -> None:
    if cfg.eta <= 0:
        raise ConfigError(f"eta must be positive, got {cfg.eta}", eta=cfg.eta)
    if x.dim() != 4 or x.shape[0] == 0:
        raise ConfigError(f"Expected a non-empty (N, C, H, W) batch, got {tuple(x.shape)}")
    if x.min() < 0 or x.max() > 1:
        raise ContractViolation("Attack input must lie in [0, 1]")


def _run_attack(
    x: torch.Tensor,
    model: ConditionalUNet,
    cfg: AttackConfig,
    sched: NoiseSchedule,
    subset: str,
    plan: StepPlan,
) -> AttackResult:
    _check_inputs(x, cfg)
    x = x.detach()
    attacked = copy.deepcopy(model)
    co_trained = attacked.subset_names(subset)
    before = parameter_bytes(attacked)
    params: Dict[str, torch.Tensor] = {n: p.detach().clone() for n, p in attacked.named_parameters()}
    names = list(params)
    token_ids = attacked.vocabulary.to_ids(cfg.prompt)

    gen = torch.Generator().manual_seed(cfg.seed)
    if cfg.random_init:
        delta = (torch.rand(x.shape, generator=gen, dtype=x.dtype) * 2 - 1) * cfg.eta
        delta = _project(x, delta, cfg.eta)
    else:
        delta = torch.zeros_like(x)

    def expression(v: Dict[str, torch.Tensor]) -> torch.Tensor:
        overrides = {n: v[n] for n in names}
        denoiser: Callable = lambda x_t, t, ids: functional_call(attacked, overrides, (x_t, t, ids))
        return ldm_loss(denoiser, v[INPUT], token_ids, sched, gen)

    trace = AttackTrace()
    start = time.perf_counter()
    for step, (step_theta, step_delta) in enumerate(plan):
        tracked = (co_trained if step_theta else []) + ([INPUT] if step_delta else [])
        record = evaluate_with_grads(expression, {**params, INPUT: x + delta}, tracked)
        trace.backward_count += 1
        if not record.is_finite():
            raise AttackFailure(f"{cfg.mode.value}: loss became {record.item()} at step {step}", step=step)
        value = record.item()
        trace.losses.append(value)

        with torch.no_grad():
            if step_theta:
                for name in co_trained:
                    params[name] = params[name] - cfg.model_lr * record.grads[name]
            if step_delta:
                trace.delta_losses.append(value)
                delta = _project(x, delta + cfg.alpha * record.grads[INPUT].sign(), cfg.eta)
        if step % 50 == 0 or step == len(plan) - 1:
            logger.debug(f"{cfg.mode.value} step {step + 1}/{len(plan)} loss {value:.4f}")
    trace.seconds = time.perf_counter() - start

    with torch.no_grad():
        for name, param in attacked.named_parameters():
            param.copy_(params[name])
    assert_frozen(before, attacked, co_trained, label=cfg.mode.value)

    perturbation = Perturbation(delta=delta, eta=cfg.eta, alpha=cfg.alpha, steps=cfg.steps)
    images = (x + delta).clamp(0.0, 1.0)
    logger.info(
        f"{cfg.mode.value} attack done: {trace.backward_count} backward passes, "
        f"linf {perturbation.linf:.4f}, {trace.seconds:.1f}s"
    )
    return AttackResult(images=images, source=x, perturbation=perturbation, model=attacked, trace=trace,
                        config=cfg)


def _require_mode(cfg: AttackConfig, mode: AttackMode) -> None:
    if cfg.mode != mode:
        raise ConfigError(f"Expected mode={mode.value}, got {cfg.mode.value}")


def caat_attack(x: torch.Tensor, model: ConditionalUNet, cfg: AttackConfig, sched: NoiseSchedule) -> AttackResult:
    """Simultaneous W_K / W_V descent and PGD ascent on x; N backward passes"""
    _require_mode(cfg, AttackMode.CAAT)
    return _run_attack(x, model, cfg, sched, "kv_cross_attention", [(True, True)] * cfg.steps)


def static_pgd_attack(x: torch.Tensor, model: ConditionalUNet, cfg: AttackConfig, sched: NoiseSchedule) -> AttackResult:
    """PGD against the frozen denoiser"""
    _require_mode(cfg, AttackMode.STATIC_PGD)
    before = parameter_bytes(model)
    result = _run_attack(x, model, cfg, sched, "none", [(False, True)] * cfg.steps)
    assert_frozen(before, model, [], label="static_pgd")
    assert_frozen(before, result.model, [], label="static_pgd")
    return result


def separated_attack(x: torch.Tensor, model: ConditionalUNet, cfg: AttackConfig, sched: NoiseSchedule) -> AttackResult:
    """Alternating blocks of b parameter steps and b delta steps; 2N backward passes"""
    _require_mode(cfg, AttackMode.SEPARATED)
    if cfg.block_size <= 0:
        raise ConfigError(f"block_size must be positive, got {cfg.block_size}", block_size=cfg.block_size)
    plan: StepPlan = []
    remaining = cfg.steps
    while remaining > 0:
        block = min(cfg.block_size, remaining)
        plan += [(True, False)] * block + [(False, True)] * block
        remaining -= block
    return _run_attack(x, model, cfg, sched, cfg.co_train_subset, plan)


def subset_variant_attack(x: torch.Tensor, model: ConditionalUNet, cfg: AttackConfig, sched: NoiseSchedule) -> AttackResult:
    """The CAAT loop with parameter updates restricted to `cfg.co_train_subset`"""
    if cfg.co_train_subset not in CO_TRAIN_SUBSETS:
        raise ConfigError(f"Unknown co-train subset: {cfg.co_train_subset}", choices=list(CO_TRAIN_SUBSETS))
    step_theta = cfg.co_train_subset != "none"
    return _run_attack(x, model, cfg, sched, cfg.co_train_subset, [(step_theta, True)] * cfg.steps)


ATTACKS = {
    AttackMode.CAAT: caat_attack,
    AttackMode.STATIC_PGD: static_pgd_attack,
    AttackMode.SEPARATED: separated_attack,
    AttackMode.SUBSET_VARIANT: subset_variant_attack,
}


def run_attack(x: torch.Tensor, model: ConditionalUNet, cfg: AttackConfig, sched: NoiseSchedule) -> AttackResult:
    """Dispatch on cfg.mode"""
    return ATTACKS[cfg.mode](x, model, cfg, sched)

"""
Model-level gradient checks

Finite-difference checks of the noise-prediction loss w.r.t. W_K, W_V and the
input images on a one-level 8x8 denoiser in 64-bit.
"""

from typing import Callable, Dict, Tuple

import torch
from torch.func import functional_call

from ..autodiff.ops import CheckCase
from .losses import ldm_loss
from .models import ModelConfig
from .schedule import build_schedule
from .unet import ConditionalUNet, build_denoiser

TOY_CONFIG = ModelConfig(image_size=8, widths=[4], context_dim=4, attn_dim=4, time_dim=8)


def toy_denoiser(seed: int = 0) -> ConditionalUNet:
    return build_denoiser(TOY_CONFIG, seed=seed).double()


def _first_kv(model: ConditionalUNet) -> Tuple[str, str]:
    prefix = next(iter(model.attention_modules()))
    return f"{prefix}.to_k.weight", f"{prefix}.to_v.weight"


def _ldm_case(gen: torch.Generator) -> CheckCase:
    model = toy_denoiser()
    params = {n: p.detach() for n, p in model.named_parameters()}
    k_name, v_name = _first_kv(model)
    sched = build_schedule(20, 1e-3, 0.2)
    ids = model.vocabulary.to_ids("a photo of S*")
    x0 = torch.rand((2, *TOY_CONFIG.image_shape), generator=gen, dtype=torch.float64)
    t = torch.randint(0, sched.T, (2,), generator=gen)
    noise = torch.randn(x0.shape, generator=gen, dtype=torch.float64)

    def expression(v):
        overrides = {**params, k_name: v["W_K"], v_name: v["W_V"]}
        denoiser = lambda x_t, tt, tok: functional_call(model, overrides, (x_t, tt, tok))
        return ldm_loss(denoiser, v["x0"], ids, sched, t=t, noise=noise)

    variables = {"W_K": params[k_name], "W_V": params[v_name], "x0": x0}
    return expression, variables, ["W_K", "W_V", "x0"]


def _unet_case(gen: torch.Generator) -> CheckCase:
    model = toy_denoiser()
    params = {n: p.detach() for n, p in model.named_parameters()}
    _, v_name = _first_kv(model)
    ids = model.vocabulary.to_ids("a photo of a person")
    x_t = torch.randn((1, *TOY_CONFIG.image_shape), generator=gen, dtype=torch.float64)

    def expression(v):
        out = functional_call(model, {**params, v_name: v["W_V"]}, (x_t, torch.tensor([3]), ids))
        return out.pow(2).mean()

    return expression, {"W_V": params[v_name]}, ["W_V"]


MODEL_CHECKS: Dict[str, Callable[[torch.Generator], CheckCase]] = {
    "ldm_loss": _ldm_case,
    "unet_forward": _unet_case,
}

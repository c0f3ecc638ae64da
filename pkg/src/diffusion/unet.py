"""
Text-conditioned U-Net denoiser

Pixel-space epsilon predictor: per resolution level one residual conv block and
one cross-attention block, a mid block with cross-attention, and a mirrored
decoder with skip connections. The token embedding table is part of the model
so that every trainable tensor has one stable name.
"""

import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..utils.errors import ConfigError, ShapeError
from .models import FILLER_TOKENS, ModelConfig, PromptContext
from .vocabulary import Vocabulary

PARAMETER_SUBSETS = ("kv_cross_attention", "all", "non_attention", "embedding_only", "none")


def _groups(channels: int) -> int:
    return math.gcd(8, channels)


def cross_attention(
    f: torch.Tensor,
    c: torch.Tensor,
    w_q: torch.Tensor,
    w_k: torch.Tensor,
    w_v: torch.Tensor,
    w_o: torch.Tensor,
    b_o: Optional[torch.Tensor] = None,
    return_weights: bool = False,
) -> Union[torch.Tensor, Tuple[torch.Tensor, torch.Tensor]]:
    """softmax(Q K^T / sqrt(d_a)) V, projected back to the query channels.

    f: (..., h*w, l) spatial features; c: (..., s, d) context.
    Weights use the nn.Linear layout: w_q (d_a, l), w_k and w_v (d_a, d), w_o (l, d_a).
    """
    if c.shape[-2] == 0:
        raise ConfigError("Context must hold at least one token")
    if f.shape[-1] != w_q.shape[1]:
        raise ShapeError(f"features {tuple(f.shape)} vs W_Q {tuple(w_q.shape)}")
    if c.shape[-1] != w_k.shape[1] or c.shape[-1] != w_v.shape[1]:
        raise ShapeError(f"context {tuple(c.shape)} vs W_K {tuple(w_k.shape)} / W_V {tuple(w_v.shape)}")
    if w_o.shape[1] != w_v.shape[0]:
        raise ShapeError(f"W_O {tuple(w_o.shape)} vs W_V {tuple(w_v.shape)}")

    q = f @ w_q.transpose(0, 1)
    k = c @ w_k.transpose(0, 1)
    v = c @ w_v.transpose(0, 1)
    scores = q @ k.transpose(-1, -2) / math.sqrt(w_q.shape[0])
    weights = torch.softmax(scores, dim=-1)
    out = (weights @ v) @ w_o.transpose(0, 1)
    if b_o is not None:
        out = out + b_o
    return (out, weights) if return_weights else out


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding, shape (B, dim)"""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class CrossAttention(nn.Module):
    """W_Q / W_K / W_V and the output projection of one block"""

    def __init__(self, query_dim: int, context_dim: int, attn_dim: int):
        super().__init__()
        self.to_q = nn.Linear(query_dim, attn_dim, bias=False)
        self.to_k = nn.Linear(context_dim, attn_dim, bias=False)
        self.to_v = nn.Linear(context_dim, attn_dim, bias=False)
        self.to_out = nn.Linear(attn_dim, query_dim)

    def forward(self, f: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        return cross_attention(f, c, self.to_q.weight, self.to_k.weight, self.to_v.weight,
                               self.to_out.weight, self.to_out.bias)


class CrossAttentionBlock(nn.Module):
    def __init__(self, channels: int, context_dim: int, attn_dim: int):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(channels), channels, eps=1e-5)
        self.attn = CrossAttention(channels, context_dim, attn_dim)

    def forward(self, h: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        b, ch, height, width = h.shape
        f = self.norm(h).flatten(2).transpose(1, 2)
        out = self.attn(f, context)
        return h + out.transpose(1, 2).reshape(b, ch, height, width)


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(in_ch), in_ch, eps=1e-5)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = nn.GroupNorm(_groups(out_ch), out_ch, eps=1e-5)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, h: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        x = self.conv1(F.silu(self.norm1(h)))
        x = x + self.time_proj(F.silu(temb))[:, :, None, None]
        x = self.conv2(F.silu(self.norm2(x)))
        return self.skip(h) + x


class ConditionalUNet(nn.Module):
    """epsilon_theta(x_t, t, c) with c gathered from the token embedding table"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.image_size % (2 ** (len(config.widths) - 1)):
            raise ConfigError(f"image_size {config.image_size} not divisible across {len(config.widths)} levels")
        self.config = config
        self.vocabulary = Vocabulary(tokens=list(config.vocabulary))
        widths, d, d_a, td = config.widths, config.context_dim, config.attn_dim, config.time_dim

        self.token_embedding = nn.Embedding(len(self.vocabulary), d)
        self.time_mlp = nn.Sequential(nn.Linear(td, td), nn.SiLU(), nn.Linear(td, td))
        self.conv_in = nn.Conv2d(config.in_channels, widths[0], 3, padding=1)

        self.down = nn.ModuleList()
        prev = widths[0]
        for i, w in enumerate(widths):
            level = nn.ModuleDict({"res": ResidualBlock(prev, w, td), "attn": CrossAttentionBlock(w, d, d_a)})
            if i < len(widths) - 1:
                level["downsample"] = nn.Conv2d(w, w, 3, stride=2, padding=1)
            self.down.append(level)
            prev = w

        self.mid_res1 = ResidualBlock(widths[-1], widths[-1], td)
        self.mid_attn = CrossAttentionBlock(widths[-1], d, d_a)
        self.mid_res2 = ResidualBlock(widths[-1], widths[-1], td)

        self.up = nn.ModuleList()
        for i, w in enumerate(widths):
            level = nn.ModuleDict({"res": ResidualBlock(2 * w, w, td), "attn": CrossAttentionBlock(w, d, d_a)})
            if i < len(widths) - 1:
                level["upsample"] = nn.Conv2d(widths[i + 1], w, 3, padding=1)
            self.up.append(level)

        self.norm_out = nn.GroupNorm(_groups(widths[0]), widths[0], eps=1e-5)
        self.conv_out = nn.Conv2d(widths[0], config.in_channels, 3, padding=1)

    def context(self, token_ids: torch.Tensor) -> torch.Tensor:
        if token_ids.shape[-1] == 0:
            raise ConfigError("Context must hold at least one token")
        return self.token_embedding(token_ids)

    def forward(self, x_t: torch.Tensor, t: Union[int, torch.Tensor], token_ids: torch.Tensor) -> torch.Tensor:
        batch = x_t.shape[0]
        context = self.context(token_ids)
        if context.dim() == 2:
            context = context.unsqueeze(0).expand(batch, -1, -1)
        t = torch.as_tensor(t, dtype=torch.long).reshape(-1).expand(batch)
        temb = self.time_mlp(timestep_embedding(t, self.config.time_dim).to(x_t.dtype))

        h = self.conv_in(x_t)
        skips = []
        for level in self.down:
            h = level["attn"](level["res"](h, temb), context)
            skips.append(h)
            if "downsample" in level:
                h = level["downsample"](h)

        h = self.mid_res2(self.mid_attn(self.mid_res1(h, temb), context), temb)

        for i in reversed(range(len(self.up))):
            level = self.up[i]
            if "upsample" in level:
                h = level["upsample"](F.interpolate(h, scale_factor=2, mode="nearest"))
            h = torch.cat([h, skips[i]], dim=1)
            h = level["attn"](level["res"](h, temb), context)

        return self.conv_out(F.silu(self.norm_out(h)))

    # named-parameter registry

    def attention_modules(self) -> Dict[str, CrossAttention]:
        return {name: m for name, m in self.named_modules() if isinstance(m, CrossAttention)}

    def subset_names(self, subset: str) -> List[str]:
        """Stable parameter names belonging to a selector"""
        names = [name for name, _ in self.named_parameters()]
        if subset == "all":
            return names
        if subset == "none":
            return []
        if subset == "embedding_only":
            return ["token_embedding.weight"]
        if subset == "kv_cross_attention":
            return [f"{prefix}.{proj}.weight" for prefix in self.attention_modules() for proj in ("to_k", "to_v")]
        if subset == "non_attention":
            blocks = [name for name, m in self.named_modules() if isinstance(m, CrossAttentionBlock)]
            return [n for n in names
                    if n != "token_embedding.weight" and not any(n.startswith(b + ".") for b in blocks)]
        raise ConfigError(f"Unknown parameter subset: {subset}", choices=list(PARAMETER_SUBSETS))

    def parameter_count(self, subset: str) -> int:
        params = dict(self.named_parameters())
        return sum(params[n].numel() for n in self.subset_names(subset))

    def extend_vocabulary(self, token: str, init_from: Sequence[str] = FILLER_TOKENS) -> int:
        """Append one token whose embedding row starts at the mean of `init_from` rows"""
        index = self.vocabulary.add(token)
        old = self.token_embedding.weight.data
        init_ids = torch.tensor([self.vocabulary.index(t) for t in init_from])
        row = old[init_ids].mean(dim=0, keepdim=True)
        table = nn.Embedding(index + 1, old.shape[1]).to(dtype=old.dtype)
        table.weight.data.copy_(torch.cat([old, row], dim=0))
        self.token_embedding = table
        return index


def build_denoiser(config: ModelConfig, seed: int = 0) -> ConditionalUNet:
    """Deterministic initialization without touching the global RNG"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return ConditionalUNet(config)


def encode_prompt(model: ConditionalUNet, prompt: Union[str, Sequence[int], torch.Tensor]) -> PromptContext:
    """Prompt -> token ids and the gathered embedding rows"""
    ids = model.vocabulary.to_ids(prompt)
    with torch.no_grad():
        context = model.context(ids).detach().clone()
    return PromptContext(token_ids=ids, context=context)

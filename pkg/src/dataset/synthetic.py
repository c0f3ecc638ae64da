"""
Synthetic identity corpus

Each identity is a deterministic arrangement of glyphs over a striped,
colored background. Photos of an identity are jittered renderings of its
canonical image.
"""

import math
from typing import List

import numpy as np
import torch
from PIL import Image, ImageDraw

from ..utils.errors import ConfigError
from .models import CorpusDataset, DatasetConfig, Glyph, IdentitySpec

GLYPH_KINDS = ("circle", "square", "triangle", "diamond", "cross")
LAYOUT = 32.0


def _identity_seed(identity_id: int, root_seed: int) -> int:
    return int(np.random.SeedSequence([root_seed, identity_id]).generate_state(1)[0])


def make_identity_spec(identity_id: int, root_seed: int = 0) -> IdentitySpec:
    seed = _identity_seed(identity_id, root_seed)
    rng = np.random.default_rng(seed)
    glyphs = [
        Glyph(
            kind=str(rng.choice(GLYPH_KINDS)),
            center=(float(rng.uniform(9, 23)), float(rng.uniform(9, 23))),
            radius=float(rng.uniform(4, 7)),
            color_index=1 + i % 2,
        )
        for i in range(int(rng.integers(2, 4)))
    ]
    palette = [tuple(float(c) for c in rng.uniform(0.05, 0.95, 3)) for _ in range(3)]
    return IdentitySpec(
        identity_id=identity_id,
        seed=seed,
        glyphs=glyphs,
        palette=palette,
        texture_frequency=float(rng.uniform(1.0, 4.0)),
        texture_angle=float(rng.uniform(0.0, math.pi)),
        offset=(int(rng.integers(-3, 4)), int(rng.integers(-3, 4))),
    )


def _glyph_points(glyph: Glyph, scale: float, offset) -> List[tuple]:
    cx = (glyph.center[0] + offset[0]) * scale
    cy = (glyph.center[1] + offset[1]) * scale
    r = glyph.radius * scale
    if glyph.kind == "triangle":
        return [(cx, cy - r), (cx - r, cy + r), (cx + r, cy + r)]
    if glyph.kind == "diamond":
        return [(cx, cy - r), (cx + r, cy), (cx, cy + r), (cx - r, cy)]
    return [(cx - r, cy - r), (cx + r, cy + r)]


def render_canonical(spec: IdentitySpec, size: int = 32) -> np.ndarray:
    """Jitter-free image, (H, W, 3) float64 in [0, 1]"""
    scale = size / LAYOUT
    yy, xx = np.mgrid[0:size, 0:size] / size
    phase = xx * math.cos(spec.texture_angle) + yy * math.sin(spec.texture_angle)
    texture = 0.75 + 0.25 * np.sin(2 * math.pi * spec.texture_frequency * phase)
    background = np.asarray(spec.palette[0])[None, None, :] * texture[..., None]

    image = Image.fromarray(np.round(np.clip(background, 0, 1) * 255).astype(np.uint8), mode="RGB")
    draw = ImageDraw.Draw(image)
    for glyph in spec.glyphs:
        fill = tuple(int(round(c * 255)) for c in spec.palette[glyph.color_index])
        points = _glyph_points(glyph, scale, spec.offset)
        if glyph.kind == "circle":
            draw.ellipse(points, fill=fill)
        elif glyph.kind == "square":
            draw.rectangle(points, fill=fill)
        elif glyph.kind == "cross":
            (x0, y0), (x1, y1) = points
            width = max(1, int(round(glyph.radius * scale / 2)))
            draw.line([(x0, y0), (x1, y1)], fill=fill, width=width)
            draw.line([(x0, y1), (x1, y0)], fill=fill, width=width)
        else:
            draw.polygon(points, fill=fill)
    return np.asarray(image, dtype=np.float64) / 255.0


def render_identity(spec: IdentitySpec, variation_seed: int, n: int, size: int = 32, jitter: bool = True) -> torch.Tensor:
    """n photos of the identity: +-2 px shift, +-10% brightness, N(0, 0.02) noise"""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    base = render_canonical(spec, size)
    rng = np.random.default_rng([spec.seed, variation_seed])
    photos = []
    for _ in range(n):
        image = base
        if jitter:
            dx, dy = rng.integers(-2, 3, size=2)
            image = np.roll(base, shift=(int(dy), int(dx)), axis=(0, 1))
            image = image * rng.uniform(0.9, 1.1) + rng.normal(0.0, 0.02, size=image.shape)
        photos.append(np.clip(image, 0.0, 1.0))
    array = np.stack(photos).transpose(0, 3, 1, 2)
    return torch.from_numpy(array.astype(np.float32))


def build_corpus(config: DatasetConfig) -> CorpusDataset:
    """Every identity rendered `per_identity` times, all from the root seed"""
    specs = [make_identity_spec(i, config.root_seed) for i in range(config.n_identities)]
    images = [render_identity(s, variation_seed=0, n=config.per_identity, size=config.image_size) for s in specs]
    labels = torch.arange(config.n_identities).repeat_interleave(config.per_identity)
    manifest = {
        "root_seed": config.root_seed,
        "identities": [{"id": s.identity_id, "seed": s.seed, "n": config.per_identity} for s in specs],
    }
    return CorpusDataset(images=torch.cat(images), labels=labels, specs=specs, manifest=manifest)


def subject_images(config: DatasetConfig, identity_id: int) -> torch.Tensor:
    """The handful of clean photos a subject publishes"""
    spec = make_identity_spec(identity_id, config.root_seed)
    return render_identity(spec, config.subject_variation_seed, config.subject_images, size=config.image_size)

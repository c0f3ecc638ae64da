"""
Dataset Data Models
"""

from typing import Any, Dict, List, Tuple

import torch
from pydantic import BaseModel, ConfigDict, Field


class Glyph(BaseModel):
    """One shape drawn on an identity's canonical image"""
    kind: str = Field(..., description="circle | square | triangle | diamond | cross")
    center: Tuple[float, float] = Field(..., description="Center in 32-px layout units")
    radius: float = Field(..., description="Half extent in 32-px layout units")
    color_index: int = Field(..., description="Palette entry used to fill the glyph")


class IdentitySpec(BaseModel):
    """Generative parameters of one synthetic subject"""
    identity_id: int = Field(..., description="Identity id / class label")
    seed: int = Field(..., description="Seed the parameters were drawn from")
    glyphs: List[Glyph] = Field(default_factory=list, description="2-3 glyph shapes")
    palette: List[Tuple[float, float, float]] = Field(..., description="Background and two glyph colors")
    texture_frequency: float = Field(..., description="Background stripe frequency (cycles per image)")
    texture_angle: float = Field(..., description="Background stripe angle in radians")
    offset: Tuple[int, int] = Field((0, 0), description="Layout offset in pixels")


class DatasetConfig(BaseModel):
    """Synthetic corpus and subject sets"""
    root_seed: int = Field(0, description="Root seed of the whole corpus")
    n_identities: int = Field(10, ge=1, description="Identities in the corpus")
    per_identity: int = Field(64, ge=1, description="Images per identity")
    image_size: int = Field(32, ge=4, description="Rendered side length")
    subject_images: int = Field(4, ge=1, description="Photos per attacked subject")
    subject_variation_seed: int = Field(10_000, description="Variation seed of subject photo sets")


class CorpusDataset(BaseModel):
    """Rendered corpus with identity labels"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    images: torch.Tensor = Field(..., description="(N, 3, H, W) in [0, 1]")
    labels: torch.Tensor = Field(..., description="(N,) identity ids")
    specs: List[IdentitySpec] = Field(default_factory=list)
    manifest: Dict[str, Any] = Field(default_factory=dict, description="{root_seed, identities: [{id, seed, n}]}")


class IngestedBatch(BaseModel):
    """Images read from a folder plus their provenance"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    images: torch.Tensor = Field(..., description="(N, 3, H, W) in [0, 1]")
    manifest: List[Dict[str, Any]] = Field(default_factory=list, description="filename, sha256, original size")

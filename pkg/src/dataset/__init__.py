"""
合成身份数据集模块

Synthetic identity corpus (glyph subjects), PNG export and folder ingestion.
"""

from .image_io import load_folder, quantize_within, save_grid, save_png, to_uint8
from .models import CorpusDataset, DatasetConfig, Glyph, IdentitySpec, IngestedBatch
from .synthetic import build_corpus, make_identity_spec, render_canonical, render_identity, subject_images

__all__ = [
    "load_folder", "quantize_within", "save_grid", "save_png", "to_uint8",
    "CorpusDataset", "DatasetConfig", "Glyph", "IdentitySpec", "IngestedBatch",
    "build_corpus", "make_identity_spec", "render_canonical", "render_identity", "subject_images",
]

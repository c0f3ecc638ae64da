"""
PNG export and folder ingestion
"""

import os
from pathlib import Path
from typing import List

import numpy as np
import torch
from loguru import logger
from PIL import Image, UnidentifiedImageError
from torchvision.utils import save_image

from ..utils.errors import ArtifactError, ContractViolation, IngestionError
from ..utils.file_utils import FileUtils
from .models import IngestedBatch

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _check_range(batch: torch.Tensor) -> None:
    if batch.dim() != 4:
        raise ContractViolation(f"Expected a (N, C, H, W) batch, got {tuple(batch.shape)}")
    if batch.numel() and (batch.min() < 0 or batch.max() > 1):
        raise ContractViolation("Image values must lie in [0, 1]")


def to_uint8(batch: torch.Tensor) -> np.ndarray:
    """(N, C, H, W) in [0, 1] -> (N, H, W, C) uint8 via round(v * 255)"""
    _check_range(batch)
    array = batch.detach().cpu().to(torch.float64).numpy()
    return np.round(array * 255.0).astype(np.uint8).transpose(0, 2, 3, 1)


def quantize_within(images: torch.Tensor, reference: torch.Tensor, eta: float) -> torch.Tensor:
    """8-bit images nearest to `images` whose offset from `reference` stays within eta"""
    _check_range(images)
    _check_range(reference)
    if images.shape != reference.shape:
        raise ContractViolation(f"Shape mismatch: {tuple(images.shape)} vs {tuple(reference.shape)}")
    x = reference.detach().cpu().to(torch.float64) * 255.0
    lo = torch.ceil(x - eta * 255.0 - 1e-6).clamp(0, 255)
    hi = torch.floor(x + eta * 255.0 + 1e-6).clamp(0, 255)
    if (lo > hi).any():
        raise ContractViolation("No 8-bit value lies within the budget of an off-grid reference", eta=eta)
    levels = torch.round(images.detach().cpu().to(torch.float64) * 255.0)
    levels = torch.minimum(torch.maximum(levels, lo), hi)
    return levels.to(torch.float32) / 255.0


def save_png(batch: torch.Tensor, directory: str, prefix: str = "run") -> List[str]:
    """Write `<prefix>_{i:04}.png` per image; returns the paths in order"""
    pixels = to_uint8(batch)
    paths = []
    try:
        os.makedirs(directory, exist_ok=True)
        for i, image in enumerate(pixels):
            path = os.path.join(directory, f"{prefix}_{i:04}.png")
            Image.fromarray(image.squeeze(-1) if image.shape[-1] == 1 else image).save(path, format="PNG")
            paths.append(path)
    except OSError as e:
        raise ArtifactError(f"Cannot write images to {directory}: {e}", path=directory) from e
    return paths


def save_grid(batch: torch.Tensor, path: str, nrow: int = 4) -> str:
    """Contact sheet of a batch"""
    _check_range(batch)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        save_image(batch.detach().cpu().float(), path, nrow=nrow, padding=1)
    except OSError as e:
        raise ArtifactError(f"Cannot write grid {path}: {e}", path=path) from e
    return path


def load_folder(path: str, size: int = 32) -> IngestedBatch:
    """Read every image in a folder, bilinear-resized to size x size, RGB in [0, 1]"""
    folder = Path(path)
    if not folder.is_dir():
        raise IngestionError(f"Not a directory: {path}", file=path)
    files = [f for f in FileUtils.list_files(str(folder)) if Path(f).suffix.lower() in IMAGE_SUFFIXES]
    if not files:
        raise IngestionError(f"No images found in {path}", file=path)

    images, manifest = [], []
    for file in files:
        try:
            with Image.open(file) as img:
                original = img.size
                rgb = img.convert("RGB")
                if rgb.size != (size, size):
                    rgb = rgb.resize((size, size), Image.BILINEAR)
                images.append(np.asarray(rgb, dtype=np.float32) / 255.0)
        except (UnidentifiedImageError, OSError, ValueError) as e:
            raise IngestionError(f"Cannot decode {file}: {e}", file=file) from e
        manifest.append({
            "filename": Path(file).name,
            "sha256": FileUtils.get_file_hash(file),
            "original_size": list(original),
        })
    logger.debug(f"Ingested {len(images)} images from {path}")
    batch = torch.from_numpy(np.stack(images).transpose(0, 3, 1, 2).copy())
    return IngestedBatch(images=batch, manifest=manifest)

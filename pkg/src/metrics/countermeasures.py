"""
Image countermeasures

Transforms a misuser may apply to protected photos before fine-tuning:
additive Gaussian noise, bit-depth quantization, 3x3 Gaussian blur and a JPEG
round-trip.
"""

from typing import Any, Dict, Optional

import numpy as np
import torch
import torchvision.transforms.functional as TF
from scipy.fft import dctn, idctn

from ..utils.errors import ConfigError

try:
    import cv2
except ImportError:  # headless installs without OpenCV
    cv2 = None

COUNTERMEASURES = ("random_noise", "quantize", "gaussian_blur", "jpeg")

# baseline JPEG luminance table
_JPEG_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def jpeg_backend() -> str:
    return "opencv" if cv2 is not None else "dct-fallback"


def random_noise(x: torch.Tensor, scale: float = 0.05, seed: int = 0) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return (x + scale * torch.randn(x.shape, generator=gen, dtype=x.dtype)).clamp(0.0, 1.0)


def quantize(x: torch.Tensor, bits: int = 6) -> torch.Tensor:
    """floor(v * L) / L with L = 2^bits - 1; idempotent"""
    levels = 2 ** bits - 1
    # tolerance keeps values already on a level from dropping one step
    return (torch.floor(x.double() * levels + 1e-4) / levels).clamp(0.0, 1.0).to(x.dtype)


def gaussian_blur(x: torch.Tensor, kernel_size: int = 3, sigma: float = 0.05) -> torch.Tensor:
    if sigma <= 0:
        raise ConfigError(f"Blur sigma must be positive, got {sigma}")
    return TF.gaussian_blur(x, kernel_size=[kernel_size, kernel_size], sigma=[sigma, sigma])


def _quality_table(quality: int) -> np.ndarray:
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((_JPEG_TABLE * scale + 50.0) / 100.0), 1.0, 255.0)


def _dct_roundtrip(channel: np.ndarray, table: np.ndarray) -> np.ndarray:
    h, w = channel.shape
    ph, pw = -h % 8, -w % 8
    padded = np.pad(channel - 128.0, ((0, ph), (0, pw)), mode="edge")
    out = np.empty_like(padded)
    for i in range(0, padded.shape[0], 8):
        for j in range(0, padded.shape[1], 8):
            coeffs = dctn(padded[i:i + 8, j:j + 8], norm="ortho")
            out[i:i + 8, j:j + 8] = idctn(np.round(coeffs / table) * table, norm="ortho")
    return out[:h, :w] + 128.0


def jpeg(x: torch.Tensor, quality: int = 75) -> torch.Tensor:
    """8-bit JPEG encode / decode round-trip"""
    if not 1 <= quality <= 100:
        raise ConfigError(f"JPEG quality must be in [1, 100], got {quality}")
    pixels = np.round(x.detach().cpu().double().numpy() * 255.0).clip(0, 255).astype(np.uint8)
    decoded = np.empty_like(pixels)
    for i, image in enumerate(pixels):
        hwc = image.transpose(1, 2, 0)
        if cv2 is not None:
            ok, encoded = cv2.imencode(".jpg", np.ascontiguousarray(hwc[..., ::-1]),
                                       [int(cv2.IMWRITE_JPEG_QUALITY), int(quality)])
            if not ok:
                raise ConfigError("OpenCV failed to encode JPEG")
            restored = cv2.imdecode(encoded, cv2.IMREAD_COLOR)[..., ::-1]
        else:
            table = _quality_table(quality)
            restored = np.stack([_dct_roundtrip(hwc[..., c].astype(np.float64), table)
                                 for c in range(hwc.shape[-1])], axis=-1)
            restored = np.round(restored).clip(0, 255).astype(np.uint8)
        decoded[i] = restored.transpose(2, 0, 1)
    return torch.from_numpy(decoded.astype(np.float32) / 255.0).to(x.dtype)


def apply_countermeasure(
    x: torch.Tensor, kind: str, params: Optional[Dict[str, Any]] = None, seed: int = 0,
) -> torch.Tensor:
    params = dict(params or {})
    if kind == "none":
        return x
    if kind == "random_noise":
        return random_noise(x, scale=params.get("scale", 0.05), seed=params.get("seed", seed))
    if kind == "quantize":
        return quantize(x, bits=params.get("bits", 6))
    if kind == "gaussian_blur":
        return gaussian_blur(x, kernel_size=params.get("kernel_size", 3), sigma=params.get("sigma", 0.05))
    if kind == "jpeg":
        return jpeg(x, quality=params.get("quality", 75))
    raise ConfigError(f"Unknown countermeasure: {kind}", choices=list(COUNTERMEASURES))

"""
Attack-efficacy metrics

fr_proxy  - fraction of generations the extractor confidently recognizes
fs_proxy  - mean clamped cosine similarity to the subject's clean photos
fid_lite  - Frechet distance between extractor feature distributions
"""

from typing import Tuple

import numpy as np
import torch
from scipy import linalg

from ..utils.errors import ConfigError, MetricError
from .extractor import FeatureExtractor

COVARIANCE_SHRINKAGE = 1e-6
ZERO_NORM = 1e-12


def _nonempty(batch: torch.Tensor, name: str) -> None:
    if batch.shape[0] == 0:
        raise ConfigError(f"{name} batch is empty")


@torch.no_grad()
def extract_features(extractor: FeatureExtractor, images: torch.Tensor) -> np.ndarray:
    extractor.eval()
    return extractor.features(images.to(torch.float32)).double().numpy()


@torch.no_grad()
def fr_proxy(generated: torch.Tensor, extractor: FeatureExtractor, tau: float = 0.5) -> float:
    _nonempty(generated, "generated")
    extractor.eval()
    confidence = torch.softmax(extractor(generated.to(torch.float32)), dim=1).max(dim=1).values
    return float((confidence >= tau).double().mean().item())


def fs_proxy(generated: torch.Tensor, references: torch.Tensor, extractor: FeatureExtractor) -> float:
    _nonempty(generated, "generated")
    _nonempty(references, "references")
    return feature_similarity(extract_features(extractor, generated), extract_features(extractor, references))


def feature_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over all (a, b) pairs of max(0, cos); pairs with a zero vector are excluded"""
    norm_a = np.linalg.norm(a, axis=1)
    norm_b = np.linalg.norm(b, axis=1)
    valid_a, valid_b = norm_a > ZERO_NORM, norm_b > ZERO_NORM
    if not valid_a.any() or not valid_b.any():
        raise MetricError("Every feature pair contains a zero vector")
    unit_a = a[valid_a] / norm_a[valid_a, None]
    unit_b = b[valid_b] / norm_b[valid_b, None]
    cosine = np.clip(unit_a @ unit_b.T, 0.0, 1.0)
    return float(cosine.mean())


def feature_statistics(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and covariance; batches with fewer than dim + 1 rows get Sigma + 1e-6 I"""
    n, dim = features.shape
    mu = features.mean(axis=0)
    sigma = np.cov(features, rowvar=False).reshape(dim, dim) if n > 1 else np.zeros((dim, dim))
    if n < dim + 1:
        sigma = sigma + COVARIANCE_SHRINKAGE * np.eye(dim)
    return mu, sigma


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    w, v = linalg.eigh((matrix + matrix.T) / 2.0)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(mu1: np.ndarray, sigma1: np.ndarray, mu2: np.ndarray, sigma2: np.ndarray) -> float:
    """||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)"""
    if not (np.isfinite(sigma1).all() and np.isfinite(sigma2).all()):
        raise MetricError("Non-finite covariance")
    root1 = _psd_sqrt(sigma1)
    inner = root1 @ sigma2 @ root1
    eigenvalues = linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_covmean = np.sqrt(np.clip(eigenvalues, 0.0, None)).sum()
    diff = mu1 - mu2
    distance = float(diff @ diff + np.trace(sigma1) + np.trace(sigma2) - 2.0 * tr_covmean)
    if not np.isfinite(distance):
        raise MetricError("Frechet distance is not finite")
    return max(distance, 0.0)


def features_frechet(a: np.ndarray, b: np.ndarray) -> float:
    return frechet_distance(*feature_statistics(a), *feature_statistics(b))


def fid_lite(generated: torch.Tensor, references: torch.Tensor, extractor: FeatureExtractor) -> float:
    _nonempty(generated, "generated")
    _nonempty(references, "references")
    return features_frechet(extract_features(extractor, generated), extract_features(extractor, references))


def score_generations(
    generated: torch.Tensor, references: torch.Tensor, extractor: FeatureExtractor, tau: float = 0.5,
) -> Tuple[float, float, float]:
    """(FR, FS, FID) of one batch of generations"""
    return (
        fr_proxy(generated, extractor, tau),
        fs_proxy(generated, references, extractor),
        fid_lite(generated, references, extractor),
    )

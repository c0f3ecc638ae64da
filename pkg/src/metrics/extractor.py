"""
Identity feature extractor

Small convolutional classifier over the synthetic identities. Its 32-dim
penultimate activations stand in for a face-recognition embedding.
"""

import math
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from loguru import logger

from ..diffusion.checkpoint import load_tensors, save_tensors
from ..utils.errors import ConfigError, ExtractorQualityError, IngestionError
from .models import MetricsConfig

FEATURE_DIM = 32


class FeatureExtractor(nn.Module):
    def __init__(self, n_classes: int, in_channels: int = 3, feature_dim: int = FEATURE_DIM):
        super().__init__()
        self.n_classes = n_classes
        blocks = []
        prev = in_channels
        for width in (16, 32, 64):
            blocks += [nn.Conv2d(prev, width, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2)]
            prev = width
        self.blocks = nn.Sequential(*blocks, nn.AdaptiveAvgPool2d(4), nn.Flatten())
        self.embed = nn.Linear(prev * 16, feature_dim)
        self.head = nn.Linear(feature_dim, n_classes)
        self.accuracy = float("nan")

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return F.relu(self.embed(self.blocks(x)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))

    def freeze(self) -> "FeatureExtractor":
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)
        return self


def stratified_split(labels: torch.Tensor, holdout: float, gen: torch.Generator) -> Tuple[torch.Tensor, torch.Tensor]:
    """Per-class random split; every class keeps at least one image on each side"""
    train, test = [], []
    for cls in torch.unique(labels).tolist():
        idx = torch.nonzero(labels == cls).flatten()
        idx = idx[torch.randperm(idx.numel(), generator=gen)]
        n_test = min(max(1, math.ceil(holdout * idx.numel())), idx.numel() - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return torch.cat(train), torch.cat(test)


def train_feature_extractor(
    images: torch.Tensor,
    labels: torch.Tensor,
    seed: int = 0,
    config: Optional[MetricsConfig] = None,
) -> FeatureExtractor:
    """Train, measure held-out accuracy and freeze; raises when accuracy < min_accuracy"""
    config = config or MetricsConfig()
    classes, counts = torch.unique(labels, return_counts=True)
    if classes.numel() < config.min_identities:
        raise ConfigError(f"Extractor needs >= {config.min_identities} identities, got {classes.numel()}")
    if counts.min().item() < config.min_per_identity:
        raise ConfigError(f"Extractor needs >= {config.min_per_identity} images per identity, got {counts.min().item()}")
    # class ids must index the head
    remap = {int(c): i for i, c in enumerate(classes.tolist())}
    targets = torch.tensor([remap[int(c)] for c in labels.tolist()], dtype=torch.long)

    gen = torch.Generator().manual_seed(seed)
    train_idx, test_idx = stratified_split(targets, config.holdout_fraction, gen)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        extractor = FeatureExtractor(n_classes=classes.numel(), in_channels=images.shape[1])
    optimizer = torch.optim.Adam(extractor.parameters(), lr=config.extractor_lr)

    extractor.train()
    for epoch in range(config.extractor_epochs):
        order = train_idx[torch.randperm(train_idx.numel(), generator=gen)]
        total = 0.0
        for start in range(0, order.numel(), config.extractor_batch_size):
            batch = order[start:start + config.extractor_batch_size]
            loss = F.cross_entropy(extractor(images[batch]), targets[batch])
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            total += loss.item() * batch.numel()
        logger.debug(f"extractor epoch {epoch + 1}/{config.extractor_epochs} loss {total / train_idx.numel():.4f}")

    extractor.freeze()
    with torch.no_grad():
        predicted = extractor(images[test_idx]).argmax(dim=1)
    extractor.accuracy = float((predicted == targets[test_idx]).float().mean().item())
    logger.info(f"Feature extractor held-out accuracy {extractor.accuracy:.3f} over {classes.numel()} identities")
    if extractor.accuracy < config.min_accuracy:
        raise ExtractorQualityError(
            f"Extractor held-out accuracy {extractor.accuracy:.3f} < {config.min_accuracy}",
            accuracy=extractor.accuracy,
        )
    return extractor


def save_extractor(extractor: FeatureExtractor, path: str) -> str:
    metadata = {"kind": "extractor", "n_classes": extractor.n_classes, "accuracy": extractor.accuracy,
                "in_channels": extractor.blocks[0].in_channels}
    return save_tensors(extractor.state_dict(), path, metadata)


def load_extractor(path: str) -> FeatureExtractor:
    state, metadata = load_tensors(path)
    if not metadata or metadata.get("kind") != "extractor":
        raise IngestionError(f"{path} is not an extractor checkpoint", file=path)
    extractor = FeatureExtractor(metadata["n_classes"], in_channels=metadata.get("in_channels", 3))
    extractor.load_state_dict(state)
    extractor.accuracy = float(metadata.get("accuracy", float("nan")))
    return extractor.freeze()

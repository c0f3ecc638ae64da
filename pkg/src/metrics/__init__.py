"""
评估指标模块

Feature-extractor proxies of detection rate, feature similarity and FID, and
the image countermeasures.
"""

from .countermeasures import COUNTERMEASURES, apply_countermeasure, jpeg_backend
from .extractor import FEATURE_DIM, FeatureExtractor, load_extractor, save_extractor, train_feature_extractor
from .models import CSV_COLUMNS, MetricsConfig, MetricsReport
from .scores import (
    feature_similarity, feature_statistics, features_frechet, fid_lite, frechet_distance, fr_proxy, fs_proxy,
    score_generations,
)

__all__ = [
    "COUNTERMEASURES", "apply_countermeasure", "jpeg_backend",
    "FEATURE_DIM", "FeatureExtractor", "load_extractor", "save_extractor", "train_feature_extractor",
    "CSV_COLUMNS", "MetricsConfig", "MetricsReport",
    "feature_similarity", "feature_statistics", "features_frechet", "fid_lite", "frechet_distance",
    "fr_proxy", "fs_proxy", "score_generations",
]

"""
Metrics Tests
"""

import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.metrics import (
    CSV_COLUMNS, MetricsConfig, MetricsReport, feature_similarity, features_frechet, fid_lite, fr_proxy,
    fs_proxy, load_extractor, save_extractor, score_generations, train_feature_extractor,
)
from src.metrics.extractor import FeatureExtractor, stratified_split
from src.metrics.scores import feature_statistics, frechet_distance
from src.utils.errors import ConfigError, ExtractorQualityError, MetricError


def _two_color_corpus(per_class: int = 16):
    red = torch.zeros(per_class, 3, 16, 16)
    red[:, 0] = 0.9
    blue = torch.zeros(per_class, 3, 16, 16)
    blue[:, 2] = 0.9
    labels = torch.arange(2).repeat_interleave(per_class)
    return torch.cat([red, blue]), labels


SMALL = MetricsConfig(min_identities=2, min_per_identity=8, extractor_epochs=40, extractor_lr=1e-2,
                      extractor_batch_size=8)


class TestFeatureSimilarity:
    """Clamped cosine between feature sets"""

    def test_self_similarity(self):
        a = np.array([[1.0, 2.0, 3.0]])
        assert feature_similarity(a, a) == pytest.approx(1.0)

    def test_orthogonal_and_opposite(self):
        assert feature_similarity(np.array([[1.0, 0.0]]), np.array([[0.0, 2.0]])) == pytest.approx(0.0)
        assert feature_similarity(np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0]])) == 0.0

    def test_mean_over_pairs(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert feature_similarity(a, np.array([[1.0, 0.0]])) == pytest.approx(0.5)

    def test_zero_vectors_excluded(self):
        a = np.array([[0.0, 0.0], [1.0, 0.0]])
        assert feature_similarity(a, np.array([[3.0, 0.0]])) == pytest.approx(1.0)
        with pytest.raises(MetricError):
            feature_similarity(np.zeros((2, 2)), np.array([[1.0, 0.0]]))


class TestFrechet:
    """Frechet distance between feature Gaussians"""

    def setup_method(self):
        rng = np.random.default_rng(0)
        self.a = rng.normal(size=(40, 4))

    def test_identical_sets(self):
        assert features_frechet(self.a, self.a) == pytest.approx(0.0, abs=1e-6)

    def test_mean_shift(self):
        shift = np.array([1.0, -2.0, 0.5, 0.0])
        assert features_frechet(self.a, self.a + shift) == pytest.approx(float(shift @ shift), rel=1e-6)

    def test_symmetric(self):
        b = np.random.default_rng(1).normal(loc=0.3, scale=2.0, size=(40, 4))
        assert features_frechet(self.a, b) == pytest.approx(features_frechet(b, self.a), rel=1e-6)
        assert features_frechet(self.a, b) > 0

    def test_small_batches_are_shrunk(self):
        mu, sigma = feature_statistics(self.a[:1])
        assert np.allclose(sigma, 1e-6 * np.eye(4))
        assert features_frechet(self.a[:1], self.a[1:2]) == pytest.approx(
            float(np.sum((self.a[0] - self.a[1]) ** 2)), rel=1e-6)

    def test_matches_closed_form_for_gaussians(self):
        rng = np.random.default_rng(3)
        dim, n = 5, 50_000
        mu_a, mu_b = rng.normal(size=dim), rng.normal(size=dim) + 1.0
        root_a, root_b = rng.normal(size=(dim, dim)), rng.normal(size=(dim, dim))
        sigma_a = root_a @ root_a.T / dim + 0.5 * np.eye(dim)
        sigma_b = root_b @ root_b.T / dim + 0.5 * np.eye(dim)
        a = rng.multivariate_normal(mu_a, sigma_a, size=n)
        b = rng.multivariate_normal(mu_b, sigma_b, size=n)
        # tr((Sa Sb)^1/2) from the eigenvalues of Sa Sb
        covmean = np.sqrt(np.clip(np.linalg.eigvals(sigma_a @ sigma_b).real, 0.0, None)).sum()
        expected = float((mu_a - mu_b) @ (mu_a - mu_b) + np.trace(sigma_a) + np.trace(sigma_b) - 2 * covmean)
        assert features_frechet(a, b) == pytest.approx(expected, rel=0.02)

    def test_non_finite_covariance(self):
        bad = np.full((2, 2), np.nan)
        with pytest.raises(MetricError):
            frechet_distance(np.zeros(2), bad, np.zeros(2), np.eye(2))


class TestFeatureExtractor:
    """Identity classifier behind the proxies"""

    def test_learns_separable_identities(self, tmp_path):
        images, labels = _two_color_corpus()
        extractor = train_feature_extractor(images, labels, seed=0, config=SMALL)
        assert extractor.accuracy >= 0.9
        assert not any(p.requires_grad for p in extractor.parameters())

        path = save_extractor(extractor, str(tmp_path / "extractor.ckpt"))
        loaded = load_extractor(path)
        assert loaded.accuracy == pytest.approx(extractor.accuracy)
        with torch.no_grad():
            assert torch.equal(loaded.features(images[:3]), extractor.features(images[:3]))

    def test_uninformative_labels_fail_quality_gate(self):
        images = torch.full((32, 3, 16, 16), 0.5)
        labels = torch.arange(2).repeat(16)
        with pytest.raises(ExtractorQualityError):
            train_feature_extractor(images, labels, seed=0, config=SMALL)

    def test_preconditions(self):
        images, labels = _two_color_corpus(per_class=4)
        with pytest.raises(ConfigError):
            train_feature_extractor(images, labels, config=SMALL)
        with pytest.raises(ConfigError):
            train_feature_extractor(images, labels, config=MetricsConfig())

    def test_stratified_split_keeps_every_class(self):
        labels = torch.arange(3).repeat_interleave(5)
        train, test = stratified_split(labels, 0.2, torch.Generator().manual_seed(0))
        assert sorted(torch.cat([train, test]).tolist()) == list(range(15))
        assert set(labels[test].tolist()) == {0, 1, 2}
        assert set(labels[train].tolist()) == {0, 1, 2}


class TestProxies:
    """FR / FS / FID-lite on extractor features"""

    def setup_method(self):
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(0)
            self.extractor = FeatureExtractor(n_classes=3).freeze()
        gen = torch.Generator().manual_seed(0)
        self.images = torch.rand(6, 3, 16, 16, generator=gen)

    def test_fr_thresholds(self):
        assert fr_proxy(self.images, self.extractor, tau=1.01) == 0.0
        assert fr_proxy(self.images, self.extractor, tau=0.0) == 1.0

    def test_self_scores(self):
        assert fid_lite(self.images, self.images, self.extractor) == pytest.approx(0.0, abs=1e-5)
        assert 0.0 < fs_proxy(self.images, self.images, self.extractor) <= 1.0

    def test_score_generations(self):
        fr, fs, fid = score_generations(self.images, self.images[:2], self.extractor)
        assert 0.0 <= fr <= 1.0
        assert 0.0 <= fs <= 1.0
        assert fid >= 0.0

    def test_empty_batches(self):
        with pytest.raises(ConfigError):
            fs_proxy(self.images[:0], self.images, self.extractor)
        with pytest.raises(ConfigError):
            fid_lite(self.images, self.images[:0], self.extractor)


class TestMetricsReport:

    def test_row_columns(self):
        report = MetricsReport(run_id="abc", attack_mode="caat", subset="kv_cross_attention", eta=0.1,
                               n_perturbed=4, method="kv_only", fr=0.5, fs=0.25, fid=3.0, backward_count=250)
        row = report.to_row()
        assert list(row) == CSV_COLUMNS
        assert CSV_COLUMNS[:11] == ["run_id", "attack_mode", "subset", "eta", "n_perturbed", "method",
                                    "FR", "FS", "FID", "seconds", "backward_count"]
        assert (row["FR"], row["FS"], row["FID"]) == (0.5, 0.25, 3.0)

    def test_bounds(self):
        with pytest.raises(ValueError):
            MetricsReport(run_id="x", attack_mode="clean", method="kv_only", fr=1.5, fs=0.0, fid=0.0)

"""
Countermeasure Tests
"""

import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.metrics import COUNTERMEASURES, MetricsConfig, apply_countermeasure
from src.metrics.countermeasures import gaussian_blur, jpeg, quantize, random_noise
from src.utils.errors import ConfigError


class TestCountermeasures:
    """Transforms applied to published photos"""

    def setup_method(self):
        gen = torch.Generator().manual_seed(0)
        self.x = torch.rand(2, 3, 16, 16, generator=gen)

    def test_none_is_identity(self):
        assert apply_countermeasure(self.x, "none") is self.x

    def test_quantize_levels_and_idempotence(self):
        once = quantize(self.x, bits=6)
        levels = once.double() * 63
        assert torch.allclose(levels, levels.round(), atol=1e-4)
        assert torch.equal(quantize(once, bits=6), once)
        assert (once <= self.x + 1e-5).all()

    def test_tiny_blur_is_near_identity(self):
        out = gaussian_blur(self.x, kernel_size=3, sigma=0.05)
        assert torch.allclose(out, self.x, atol=1e-6)

    def test_blur_smooths(self):
        out = gaussian_blur(self.x, kernel_size=3, sigma=1.0)
        assert out.var() < self.x.var()
        with pytest.raises(ConfigError):
            gaussian_blur(self.x, sigma=0.0)

    def test_random_noise_is_seeded(self):
        first = random_noise(self.x, scale=0.05, seed=3)
        assert torch.equal(first, random_noise(self.x, scale=0.05, seed=3))
        assert not torch.equal(first, random_noise(self.x, scale=0.05, seed=4))
        assert first.min() >= 0 and first.max() <= 1

    def test_jpeg_round_trip(self):
        smooth = torch.linspace(0.2, 0.8, 16).repeat(1, 3, 16, 1)
        out = jpeg(smooth, quality=75)
        assert out.shape == smooth.shape
        assert (out - smooth).abs().mean() < 0.05
        with pytest.raises(ConfigError):
            jpeg(smooth, quality=0)

    def test_configured_parameters(self):
        config = MetricsConfig()
        assert config.countermeasure_params("quantize") == {"bits": 6}
        assert config.countermeasure_params("gaussian_blur") == {"kernel_size": 3, "sigma": 0.05}
        assert config.countermeasure_params("jpeg") == {"quality": 75}
        for kind in COUNTERMEASURES:
            out = apply_countermeasure(self.x, kind, config.countermeasure_params(kind), seed=0)
            assert out.shape == self.x.shape
            assert out.min() >= 0 and out.max() <= 1

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            apply_countermeasure(self.x, "median_filter")

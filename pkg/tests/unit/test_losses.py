"""
Unit tests for the training losses and feature extractors.
"""
import math
import pytest
from pathlib import Path
import sys

import numpy as np
import torch

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from src.core import DimensionError, ExtractorError, ImageBatch
from src.losses import (
    EPSILON,
    IdentityExtractor,
    InceptionExtractor,
    ToyExtractor,
    adv_loss,
    build_extractor,
    disc_loss,
    disc_loss_terms,
    extract_features,
    perceptual_loss,
    refiner_loss,
    self_reg_loss
)


def tensor(*values):
    return torch.tensor(values, dtype=torch.float64)


@pytest.mark.unit
class TestDiscriminatorLoss:
    """Test the discriminator cross-entropy."""

    def test_uncertain_discriminator(self):
        """Test p = 0.5 everywhere gives 2 ln 2."""
        assert float(disc_loss(tensor(0.5, 0.5), tensor(0.5))) == pytest.approx(2 * math.log(2))

    def test_perfect_discriminator(self):
        """Test a perfect discriminator has (near) zero loss."""
        assert float(disc_loss(tensor(0.0), tensor(1.0))) == pytest.approx(0.0, abs=1e-6)

    def test_terms_split(self):
        """Test the refined and real halves."""
        refined_term, real_term = disc_loss_terms(tensor(0.75), tensor(0.25))
        assert float(refined_term) == pytest.approx(-math.log(0.25))
        assert float(real_term) == pytest.approx(-math.log(0.25))

    def test_empty_set_contributes_zero(self):
        """Test an empty refined set leaves only the real term."""
        loss = disc_loss(torch.empty(0, dtype=torch.float64), tensor(0.5))
        assert float(loss) == pytest.approx(math.log(2))

    def test_gradcheck(self):
        """Test analytic gradients against finite differences."""
        p_refined = tensor(0.2, 0.6).requires_grad_()
        p_real = tensor(0.3, 0.7, 0.55).requires_grad_()
        assert torch.autograd.gradcheck(disc_loss, (p_refined, p_real), eps=1e-4, rtol=1e-3)


@pytest.mark.unit
class TestAdversarialLoss:
    """Test the refiner's adversarial loss."""

    def test_uncertain_discriminator(self):
        """Test p_real = 0.5 gives ln 2."""
        assert float(adv_loss(tensor(0.5))) == pytest.approx(math.log(2))

    def test_fooled_discriminator(self):
        """Test refined images called real cost (near) nothing."""
        assert float(adv_loss(tensor(1.0, 1.0))) == pytest.approx(0.0, abs=1e-6)

    def test_clamped_at_zero_probability(self):
        """Test p_real = 0 is clamped to -log(EPSILON)."""
        assert float(adv_loss(tensor(0.0))) == pytest.approx(-math.log(EPSILON), rel=1e-6)
        assert float(adv_loss(tensor(0.0))) == pytest.approx(16.118, abs=1e-3)

    def test_float32_near_clamp(self):
        """Test float32 probabilities at the clamp keep the full ceiling."""
        p_real = torch.tensor([1e-7], dtype=torch.float32)
        assert float(adv_loss(p_real)) == pytest.approx(-math.log(EPSILON), rel=1e-4)

    def test_gradcheck(self):
        """Test analytic gradients against finite differences."""
        p_real = tensor(0.1, 0.4, 0.9).requires_grad_()
        assert torch.autograd.gradcheck(adv_loss, (p_real,), eps=1e-4, rtol=1e-3)


@pytest.mark.unit
class TestSelfRegularization:
    """Test the L1 self-regularization loss."""

    def test_sum_per_image_mean_over_batch(self):
        """Test a constant 0.1 offset on 2x3x2x2 images gives 1.2."""
        refined = torch.full((2, 3, 2, 2), 0.1, dtype=torch.float64)
        synthetic = torch.zeros(2, 3, 2, 2, dtype=torch.float64)
        assert float(self_reg_loss(refined, synthetic)) == pytest.approx(1.2)

    def test_zero_for_identity(self):
        """Test identical inputs give zero."""
        x = torch.rand(2, 3, 8, 8)
        assert float(self_reg_loss(x, x.clone())) == 0.0

    def test_accepts_image_batch(self):
        """Test ImageBatch arguments are converted."""
        a = ImageBatch(np.full((1, 8, 8, 3), 0.5))
        b = ImageBatch(np.full((1, 8, 8, 3), 0.25))
        assert float(self_reg_loss(a, b)) == pytest.approx(0.25 * 192)

    def test_shape_mismatch(self):
        """Test mismatched shapes raise DimensionError."""
        with pytest.raises(DimensionError):
            self_reg_loss(torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 9))


@pytest.mark.unit
class TestPerceptualLoss:
    """Test the feature-space perceptual loss."""

    def test_identity_extractor_is_mean_squared_error(self):
        """Test pixel features give the per-image mean squared difference."""
        refined = torch.full((2, 3, 8, 8), 0.3, dtype=torch.float64)
        synthetic = torch.full((2, 3, 8, 8), 0.2, dtype=torch.float64)
        value = perceptual_loss(refined, synthetic, IdentityExtractor())
        assert float(value) == pytest.approx(0.01)

    def test_toy_downsample_layer(self):
        """Test the pooled map keeps constant offsets."""
        refined = torch.full((1, 3, 8, 8), 0.5, dtype=torch.float64)
        synthetic = torch.full((1, 3, 8, 8), 0.1, dtype=torch.float64)
        value = perceptual_loss(refined, synthetic, ToyExtractor(seed=0), "downsample")
        assert float(value) == pytest.approx(0.16)

    def test_unknown_layer(self):
        """Test unknown layers raise ExtractorError."""
        x = torch.rand(1, 3, 8, 8)
        with pytest.raises(ExtractorError, match="Mixed_5b"):
            perceptual_loss(x, x, ToyExtractor(), "Mixed_5b")

    def test_gradcheck(self):
        """Test gradients through the toy feature map."""
        extractor = ToyExtractor(seed=1)
        synthetic = torch.rand(2, 3, 8, 8, dtype=torch.float64)
        refined = torch.rand(2, 3, 8, 8, dtype=torch.float64, requires_grad=True)
        for layer in ("downsample", "projection"):
            assert torch.autograd.gradcheck(
                lambda r: perceptual_loss(r, synthetic, extractor, layer), (refined,),
                eps=1e-4, rtol=1e-3,
            )

    def test_refiner_loss(self):
        """Test the weighted combination."""
        assert refiner_loss(1.0, 2.0, alpha=50.0, beta=4e-6) == pytest.approx(50.000008)


@pytest.mark.unit
class TestExtractors:
    """Test extractor construction and feature extraction."""

    def test_toy_extractor_is_seeded(self):
        """Test equal seeds give equal features, other seeds differ."""
        batch = ImageBatch(np.random.default_rng(0).uniform(size=(3, 16, 16, 3)))
        first = extract_features(ToyExtractor(seed=4), batch)
        assert first.shape == (3, 64)
        assert first.dtype == np.float64
        assert np.array_equal(first, extract_features(ToyExtractor(seed=4), batch))
        assert not np.allclose(first, extract_features(ToyExtractor(seed=5), batch))

    def test_toy_extractor_is_frozen(self):
        """Test the extractor has no trainable parameters and is in eval mode."""
        extractor = ToyExtractor()
        assert not any(p.requires_grad for p in extractor.parameters())
        assert not extractor.training

    def test_build_backends(self):
        """Test backend names map to extractor classes."""
        assert isinstance(build_extractor("identity"), IdentityExtractor)
        assert isinstance(build_extractor("toy_deterministic"), ToyExtractor)
        with pytest.raises(ExtractorError):
            build_extractor("vgg19")

    def test_pretrained_fallback(self, tmp_path, caplog):
        """Test missing weights fall back to the toy backend with a warning."""
        extractor = build_extractor("pretrained_inception", str(tmp_path / "missing.pth"))
        assert isinstance(extractor, ToyExtractor)
        assert "falling back" in caplog.text

    def test_pretrained_without_fallback(self, tmp_path):
        """Test missing weights raise when fallback is disabled."""
        with pytest.raises(ExtractorError, match="not found"):
            build_extractor("pretrained_inception", str(tmp_path / "missing.pth"),
                            allow_toy_fallback=False)
        with pytest.raises(ExtractorError, match="not set"):
            build_extractor("pretrained_inception", None, allow_toy_fallback=False)

    @pytest.mark.pretrained
    def test_inception_features(self, inception_weights):
        """Test the pooled Inception vector is 2048-dimensional."""
        extractor = InceptionExtractor(inception_weights)
        batch = ImageBatch(np.random.default_rng(0).uniform(size=(2, 80, 160, 3)))
        assert extract_features(extractor, batch).shape == (2, 2048)
        assert extractor.feature_map(batch.to_tensor(), "Mixed_5d").shape[1] == 288

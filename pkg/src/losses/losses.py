"""
Scalar training losses.

Probabilities are "real"-class probabilities from ``disc_prob_real`` and are
clamped to [EPSILON, 1 - EPSILON] before every log. Image arguments are
channel-first tensors [B, C, H, W] (an ``ImageBatch`` is converted).
"""
from typing import Optional, Tuple, Union

import torch

from ..core.errors import DimensionError
from ..core.types import ImageBatch
from .features import FeatureMapExtractor, IdentityExtractor

EPSILON = 1e-7

ImageLike = Union[torch.Tensor, ImageBatch]


def _clamp(prob: torch.Tensor) -> torch.Tensor:
    return prob.clamp(EPSILON, 1.0 - EPSILON)


def _neg_log_mean(prob: torch.Tensor) -> torch.Tensor:
    """mean(-log p) over a set; an empty set contributes 0."""
    if prob.numel() == 0:
        return prob.new_zeros(())
    return -torch.log(_clamp(prob)).mean()


def _as_tensor(images: ImageLike) -> torch.Tensor:
    if isinstance(images, ImageBatch):
        return images.to_tensor()
    return images


def _check_pair(refined: torch.Tensor, synthetic: torch.Tensor):
    if refined.shape != synthetic.shape:
        raise DimensionError(
            f"Refined and synthetic shapes differ: {tuple(refined.shape)} vs {tuple(synthetic.shape)}"
        )


def disc_loss_terms(prob_real_refined: torch.Tensor,
                    prob_real_real: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    The two halves of the discriminator loss.

    Returns:
        (refined term, real term): mean -log(1 - p) over refined images and
        mean -log(p) over real images
    """
    return _neg_log_mean(1.0 - prob_real_refined), _neg_log_mean(prob_real_real)


def disc_loss(prob_real_refined: torch.Tensor, prob_real_real: torch.Tensor) -> torch.Tensor:
    """
    Two-class cross-entropy of the discriminator: refined images labeled
    synthetic, real images labeled real.

    Args:
        prob_real_refined: [N] real-class probabilities of refined images
        prob_real_real: [M] real-class probabilities of real images

    Returns:
        Scalar loss, 0 for a perfect discriminator
    """
    refined_term, real_term = disc_loss_terms(prob_real_refined, prob_real_real)
    return refined_term + real_term


def adv_loss(prob_real_refined: torch.Tensor) -> torch.Tensor:
    """
    Adversarial loss of the refiner.

    With p_synth = 1 - p_real the loss is mean(-log(1 - p_synth)), taken as
    mean(-log p_real): zero when the discriminator calls every refined image real.
    """
    return _neg_log_mean(prob_real_refined)


def self_reg_loss(refined: ImageLike, synthetic: ImageLike,
                  extractor: Optional[FeatureMapExtractor] = None) -> torch.Tensor:
    """
    L1 distance between refined and synthetic images in a feature space.

    Args:
        refined: Refined images
        synthetic: Their synthetic inputs
        extractor: Feature map, identity when None

    Returns:
        Absolute differences summed over all elements of an image, averaged over the batch
    """
    refined, synthetic = _as_tensor(refined), _as_tensor(synthetic)
    _check_pair(refined, synthetic)
    extractor = extractor or IdentityExtractor()
    diff = extractor.feature_map(refined) - extractor.feature_map(synthetic)
    return diff.abs().flatten(1).sum(dim=1).mean()


def perceptual_loss(refined: ImageLike, synthetic: ImageLike,
                    extractor: FeatureMapExtractor, layer: Optional[str] = None) -> torch.Tensor:
    """
    Squared feature distance normalized by the layer's C*H*W.

    Args:
        refined: Refined images
        synthetic: Their synthetic inputs
        extractor: Frozen feature extractor
        layer: Extractor layer; the extractor's default when None

    Returns:
        Scalar loss averaged over the batch
    """
    refined, synthetic = _as_tensor(refined), _as_tensor(synthetic)
    _check_pair(refined, synthetic)
    diff = extractor.feature_map(refined, layer) - extractor.feature_map(synthetic, layer)
    return diff.pow(2).flatten(1).mean(dim=1).mean()


def refiner_loss(adv, rec, alpha: float, beta: float):
    """Weighted refiner objective alpha * adv + beta * rec."""
    return alpha * adv + beta * rec

"""
Structural similarity with an 11x11 Gaussian window (sigma 1.5) on images in [0, 1].

Computed in float64 over "valid" window positions only, then averaged over
channels and positions.
"""
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..core.errors import DimensionError
from ..core.types import ImageBatch

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA,
                    channels: int = 3) -> torch.Tensor:
    """Normalized 2-D Gaussian kernel repeated per channel, shape [C, 1, size, size]."""
    coords = torch.arange(size, dtype=torch.float64) - size // 2
    profile = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    window = torch.outer(profile, profile)
    window /= window.sum()
    return window.expand(channels, 1, size, size).contiguous()


def ssim_map(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """
    Local SSIM values.

    Args:
        x: Tensor [B, C, H, W] in [0, 1]
        y: Tensor of the same shape

    Returns:
        SSIM map [B, C, H - 10, W - 10]
    """
    if x.shape != y.shape:
        raise DimensionError(f"SSIM inputs differ in shape: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.shape[-2] < WINDOW_SIZE or x.shape[-1] < WINDOW_SIZE:
        raise DimensionError(
            f"Images must be at least {WINDOW_SIZE}x{WINDOW_SIZE} for SSIM, got {x.shape[-2]}x{x.shape[-1]}"
        )
    x, y = x.double(), y.double()
    channels = x.shape[1]
    window = gaussian_window(channels=channels).to(x.device)

    def blur(t):
        return F.conv2d(t, window, groups=channels)

    mu_x, mu_y = blur(x), blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov_xy = blur(x * y) - mu_x * mu_y

    numerator = (2 * mu_x * mu_y + C1) * (2 * cov_xy + C2)
    denominator = (mu_x * mu_x + mu_y * mu_y + C1) * (var_x + var_y + C2)
    return numerator / denominator


def ssim_per_image(a: ImageBatch, b: ImageBatch) -> np.ndarray:
    """SSIM of each image pair, shape [B]."""
    return ssim_map(a.to_tensor(torch.float64), b.to_tensor(torch.float64)).mean(dim=(1, 2, 3)).numpy()


def ssim(a: ImageBatch, b: ImageBatch) -> float:
    """
    Mean SSIM over image pairs.

    Args:
        a: Images [B, H, W, C] in [0, 1]
        b: Images of the same shape

    Returns:
        Scalar in [-1, 1]; exactly 1.0 when a == b
    """
    return float(ssim_per_image(a, b).mean())


def pair_indices(size_a: int, size_b: int, seed: int,
                 limit: Optional[int] = None):
    """
    Seeded random pairing of two sets of possibly different sizes.

    Returns:
        (indices into a, indices into b) of equal length min(size_a, size_b, limit)
    """
    count = min(size_a, size_b) if limit is None else min(size_a, size_b, limit)
    rng = np.random.default_rng(seed)
    return rng.permutation(size_a)[:count], rng.permutation(size_b)[:count]


def dataset_ssim(a: ImageBatch, b: ImageBatch, seed: int = 0,
                 names_a: Optional[Sequence[str]] = None,
                 names_b: Optional[Sequence[str]] = None,
                 limit: Optional[int] = None) -> float:
    """
    SSIM between two image sets.

    Sets with identical name lists (e.g. refined images and their synthetic
    sources) are compared image by image; otherwise images are matched by a
    seeded random pairing of equal-size samples.

    Args:
        a: First set
        b: Second set
        seed: Pairing seed
        names_a: File stems of ``a``
        names_b: File stems of ``b``
        limit: Maximum number of pairs

    Returns:
        Mean SSIM over the pairs
    """
    if names_a is not None and names_b is not None and list(names_a) == list(names_b):
        count = len(a) if limit is None else min(len(a), limit)
        return ssim(a[:count], b[:count])
    index_a, index_b = pair_indices(len(a), len(b), seed, limit)
    return ssim(a[index_a], b[index_b])

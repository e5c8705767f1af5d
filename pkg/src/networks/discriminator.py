"""
Patch discriminator D_phi.

Layers:

    1  conv 5x5, stride 3, 96 maps, ReLU
    2  conv 4x4, stride 2, 64 maps, ReLU
    3  max-pool 3x3, stride 2
    4  conv 3x3, stride 2, 32 maps, ReLU
    5  conv 1x1, stride 1, 32 maps, ReLU
    6  conv 1x1, stride 1, 2 maps
       softmax over the 2 maps at every location

Padding is TF-style "same": every stride-s layer maps a side of n to ceil(n / s).
Channel 0 is "synthetic", channel 1 is "real".
"""
import math
from typing import Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .refiner import check_image_tensor

SYNTHETIC_CHANNEL = 0
REAL_CHANNEL = 1

# (kernel, stride, out_channels); None marks the max-pool layer
DISCRIMINATOR_LAYERS = (
    (5, 3, 96),
    (4, 2, 64),
    (3, 2, None),
    (3, 2, 32),
    (1, 1, 32),
    (1, 1, 2),
)


def same_padding(size: int, kernel: int, stride: int) -> Tuple[int, int]:
    """
    Padding (before, after) so a strided layer outputs ceil(size / stride).
    """
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def _pad_same(x: torch.Tensor, kernel: int, stride: int, value: float = 0.0) -> torch.Tensor:
    top, bottom = same_padding(x.shape[-2], kernel, stride)
    left, right = same_padding(x.shape[-1], kernel, stride)
    if top == bottom == left == right == 0:
        return x
    return F.pad(x, (left, right, top, bottom), value=value)


class SameConv2d(nn.Conv2d):
    """Conv2d with TF-style same padding for any stride."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return super().forward(_pad_same(x, self.kernel_size[0], self.stride[0]))


class SameMaxPool2d(nn.Module):
    """Max-pool with same padding; padded cells never win the max."""

    def __init__(self, kernel_size: int, stride: int):
        super().__init__()
        self.kernel_size = kernel_size
        self.stride = stride

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        padded = _pad_same(x, self.kernel_size, self.stride, value=float("-inf"))
        return F.max_pool2d(padded, self.kernel_size, self.stride)


class DiscriminatorNet(nn.Module):
    """Two-class patch classifier distinguishing refined from real images."""

    def __init__(self, in_channels: int = 3):
        super().__init__()
        self.in_channels = in_channels
        layers = []
        channels = in_channels
        for index, (kernel, stride, out_channels) in enumerate(DISCRIMINATOR_LAYERS):
            if out_channels is None:
                layers.append(SameMaxPool2d(kernel, stride))
                continue
            layers.append(SameConv2d(channels, out_channels, kernel, stride=stride))
            if index < len(DISCRIMINATOR_LAYERS) - 1:
                layers.append(nn.ReLU())
            channels = out_channels
        self.layers = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """
        Args:
            x: Images [B, 3, H, W]

        Returns:
            Logits [B, 2, h', w']
        """
        return self.layers(x)


def output_size(height: int, width: int) -> Tuple[int, int]:
    """Spatial size of the probability map for a given input size."""
    for kernel, stride, _ in DISCRIMINATOR_LAYERS:
        height, width = math.ceil(height / stride), math.ceil(width / stride)
    return height, width


def disc_forward(net: DiscriminatorNet, x: torch.Tensor) -> torch.Tensor:
    """
    Per-location class probabilities.

    Args:
        net: Discriminator
        x: Images [B, 3, H, W]

    Returns:
        Probability map [B, h', w', 2]; the two channels sum to 1 at every location
    """
    check_image_tensor(x, net.in_channels)
    return torch.softmax(net(x), dim=1).permute(0, 2, 3, 1)


def disc_prob_real(prob_map: torch.Tensor) -> torch.Tensor:
    """
    Reduce a probability map to one scalar per image.

    Args:
        prob_map: Tensor [B, h', w', 2]

    Returns:
        Tensor [B]: mean over locations of the "real" channel
    """
    return prob_map[..., REAL_CHANNEL].mean(dim=(1, 2))

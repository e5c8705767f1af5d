"""
Compact U-Net-style segmentation network.

Three encoder levels (base, 2x, 4x channels), an 8x bottleneck, and a
mirrored decoder with skip connections. Inputs whose sides are not multiples
of 8 are zero-padded and the scores cropped back, so any size >= 8 works.
"""
from typing import Callable, Dict

import torch
import torch.nn as nn
import torch.nn.functional as F

from .refiner import check_image_tensor

LEVELS = 3


class DoubleConv(nn.Module):
    """Two 3x3 conv + ReLU layers."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, 3, padding=1),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.block(x)


class SegNet(nn.Module):
    """Encoder-decoder producing per-pixel class scores at input resolution."""

    def __init__(self, num_classes: int, base_channels: int = 16, in_channels: int = 3):
        super().__init__()
        self.num_classes = num_classes
        self.in_channels = in_channels
        widths = [base_channels * 2 ** level for level in range(LEVELS)]
        self.encoders = nn.ModuleList()
        channels = in_channels
        for width in widths:
            self.encoders.append(DoubleConv(channels, width))
            channels = width
        self.bottleneck = DoubleConv(channels, channels * 2)
        channels *= 2
        self.upsamples = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for width in reversed(widths):
            self.upsamples.append(nn.ConvTranspose2d(channels, width, kernel_size=2, stride=2))
            self.decoders.append(DoubleConv(width * 2, width))
            channels = width
        self.head = nn.Conv2d(channels, num_classes, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        height, width = x.shape[-2:]
        multiple = 2 ** LEVELS
        pad_h = (-height) % multiple
        pad_w = (-width) % multiple
        if pad_h or pad_w:
            x = F.pad(x, (0, pad_w, 0, pad_h))

        skips = []
        for encoder in self.encoders:
            x = encoder(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for upsample, decoder, skip in zip(self.upsamples, self.decoders, reversed(skips)):
            x = decoder(torch.cat([upsample(x), skip], dim=1))
        return self.head(x)[..., :height, :width]


def seg_forward(net: nn.Module, x: torch.Tensor) -> torch.Tensor:
    """
    Per-pixel class scores.

    Args:
        net: Segmentation network
        x: Images [B, 3, H, W]

    Returns:
        Scores [B, num_classes, H, W]; argmax over dim 1 gives class indices
    """
    check_image_tensor(x, net.in_channels)
    return net(x)


SEGMENTATION_ARCHITECTURES: Dict[str, Callable[..., nn.Module]] = {"unet": SegNet}


def register_architecture(name: str, builder: Callable[..., nn.Module]):
    """
    Register another segmentation architecture.

    The builder is called as ``builder(num_classes=..., base_channels=...)``
    and must return a module with ``num_classes`` and ``in_channels``
    attributes whose forward maps [B, 3, H, W] to [B, num_classes, H, W].
    """
    SEGMENTATION_ARCHITECTURES[name] = builder

"""
Refiner network: resolution-preserving residual image-to-image generator.

Input conv (4x4, 64 maps) -> 5 residual blocks (two 4x4 convs each) ->
1x1 output conv -> sigmoid, all stride 1 with same padding.
"""
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core.errors import DimensionError
from ..core.types import ImageBatch, MIN_IMAGE_SIDE


class ResnetBlock(nn.Module):
    """conv-ReLU-conv with an additive skip, followed by ReLU."""

    def __init__(self, channels: int, kernel_size: int = 4):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, kernel_size, padding="same")
        self.conv2 = nn.Conv2d(channels, channels, kernel_size, padding="same")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.relu(x + self.conv2(F.relu(self.conv1(x))))


class RefinerNet(nn.Module):
    """Refiner R_theta mapping synthetic images to realistic-styled images."""

    def __init__(self, channels: int = 64, num_blocks: int = 5, kernel_size: int = 4,
                 in_channels: int = 3):
        """
        Build the refiner.

        Args:
            channels: Feature maps in the trunk
            num_blocks: Number of residual blocks
            kernel_size: Kernel size of the input conv and block convs
            in_channels: Image channels (3 for RGB)
        """
        super().__init__()
        self.in_channels = in_channels
        self.input_conv = nn.Conv2d(in_channels, channels, kernel_size, padding="same")
        self.blocks = nn.Sequential(*[ResnetBlock(channels, kernel_size) for _ in range(num_blocks)])
        self.output_conv = nn.Conv2d(channels, in_channels, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        features = self.blocks(F.relu(self.input_conv(x)))
        return torch.sigmoid(self.output_conv(features))


def check_image_tensor(x: torch.Tensor, channels: int = 3):
    """Validate a [B, C, H, W] image tensor."""
    if x.dim() != 4:
        raise DimensionError(f"Expected [B, C, H, W] tensor, got shape {tuple(x.shape)}")
    if x.shape[1] != channels:
        raise DimensionError(f"Expected {channels} channels, got {x.shape[1]}")
    if x.shape[2] < MIN_IMAGE_SIDE or x.shape[3] < MIN_IMAGE_SIDE:
        raise DimensionError(f"Images must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")


def refiner_forward(net: RefinerNet, x: torch.Tensor) -> torch.Tensor:
    """
    Refine a batch of images (differentiable with respect to the refiner's parameters).

    Args:
        net: Refiner network
        x: Tensor [B, 3, H, W] with values in [0, 1]

    Returns:
        Refined tensor of the same shape, values in [0, 1]
    """
    check_image_tensor(x, net.in_channels)
    return net(x)


@torch.no_grad()
def refine_batch(net: RefinerNet, batch: ImageBatch, chunk_size: int = 64) -> ImageBatch:
    """
    Refine an ImageBatch for inference, in chunks.

    Args:
        net: Refiner network
        batch: Channel-last images
        chunk_size: Images per forward pass

    Returns:
        Refined ImageBatch
    """
    device = next(net.parameters()).device
    dtype = next(net.parameters()).dtype
    images = batch.to_tensor(dtype=dtype, device=device)
    outputs = [refiner_forward(net, images[start:start + chunk_size])
               for start in range(0, images.shape[0], chunk_size)]
    return ImageBatch.from_tensor(torch.cat(outputs, dim=0))

"""Refiner, discriminator and segmentation networks."""
from .refiner import ResnetBlock, RefinerNet, refiner_forward, refine_batch, check_image_tensor
from .discriminator import (
    DiscriminatorNet,
    disc_forward,
    disc_prob_real,
    output_size,
    same_padding,
    SYNTHETIC_CHANNEL,
    REAL_CHANNEL
)
from .segnet import SegNet, seg_forward, register_architecture, SEGMENTATION_ARCHITECTURES
from .factory import NetKind, init_params, parameter_digest

__all__ = [
    "ResnetBlock",
    "RefinerNet",
    "refiner_forward",
    "refine_batch",
    "check_image_tensor",
    "DiscriminatorNet",
    "disc_forward",
    "disc_prob_real",
    "output_size",
    "same_padding",
    "SYNTHETIC_CHANNEL",
    "REAL_CHANNEL",
    "SegNet",
    "seg_forward",
    "register_architecture",
    "SEGMENTATION_ARCHITECTURES",
    "NetKind",
    "init_params",
    "parameter_digest"
]

"""Seeded construction of the three network kinds."""
import hashlib
from enum import Enum

import torch
import torch.nn as nn

from ..core.errors import ConfigError
from .discriminator import DiscriminatorNet
from .refiner import RefinerNet
from .segnet import SEGMENTATION_ARCHITECTURES


class NetKind(Enum):
    REFINER = "refiner"
    DISCRIMINATOR = "discriminator"
    SEGMENTATION = "segmentation"


def init_params(net_kind, seed: int, **kwargs) -> nn.Module:
    """
    Build a network with deterministic fan-in-scaled uniform initialization.

    Every conv layer keeps torch's default scheme (Kaiming-uniform weights,
    uniform biases bounded by 1/sqrt(fan_in)), drawn from a generator seeded
    by ``seed`` without touching the global RNG state.

    Args:
        net_kind: NetKind or its string value
        seed: Initialization seed
        **kwargs: Constructor arguments; for segmentation, ``arch`` selects the architecture

    Returns:
        The initialized module
    """
    kind = NetKind(net_kind)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        if kind is NetKind.REFINER:
            return RefinerNet(**kwargs)
        if kind is NetKind.DISCRIMINATOR:
            return DiscriminatorNet(**kwargs)
        arch = kwargs.pop("arch", "unet")
        if arch not in SEGMENTATION_ARCHITECTURES:
            raise ConfigError(f"Unknown segmentation architecture {arch!r}")
        return SEGMENTATION_ARCHITECTURES[arch](**kwargs)


def parameter_digest(net: nn.Module) -> str:
    """SHA-256 over all parameter bytes, for freeze checks."""
    digest = hashlib.sha256()
    for name, tensor in net.state_dict().items():
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()

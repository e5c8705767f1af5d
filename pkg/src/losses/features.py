"""
Frozen feature extractors used by the self-regularization, perceptual and FID
computations.

Three backends share one interface:

- ``identity``: the raw pixels (default map of the self-regularization loss)
- ``toy_deterministic``: weight-file-free, seeded; a 2x2 average-pooled pixel
  map for the perceptual loss and a 64-dim random projection for FID
- ``pretrained_inception``: torchvision Inception-v3 loaded from a local
  weights file; a mixed-block activation map for the perceptual loss and the
  2048-dim pooled vector for FID
"""
import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..core.errors import ExtractorError
from ..core.types import ImageBatch

logger = logging.getLogger(__name__)

TOY_FEATURE_DIM = 64
TOY_POOL_SIDE = 8
INCEPTION_INPUT_SIZE = 299
INCEPTION_FEATURE_DIM = 2048
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# Execution order of torchvision's Inception3 up to global pooling
INCEPTION_BLOCKS = (
    "Conv2d_1a_3x3", "Conv2d_2a_3x3", "Conv2d_2b_3x3", "maxpool1",
    "Conv2d_3b_1x1", "Conv2d_4a_3x3", "maxpool2",
    "Mixed_5b", "Mixed_5c", "Mixed_5d",
    "Mixed_6a", "Mixed_6b", "Mixed_6c", "Mixed_6d", "Mixed_6e",
    "Mixed_7a", "Mixed_7b", "Mixed_7c",
)


class FeatureMapExtractor(nn.Module):
    """
    Base class for frozen feature extractors.

    Subclasses implement ``feature_map`` (differentiable with respect to the
    input) and ``extract`` (one flat vector per image).
    """
    backend = ""
    layers: Tuple[str, ...] = ()
    default_layer = ""
    expected_input: Optional[Tuple[int, int]] = None

    def freeze(self) -> "FeatureMapExtractor":
        for param in self.parameters():
            param.requires_grad_(False)
        return self.eval()

    def check_layer(self, layer: Optional[str]) -> str:
        layer = layer or self.default_layer
        if layer not in self.layers:
            raise ExtractorError(
                f"{self.backend} extractor has no layer {layer!r}; choose from {self.layers}"
            )
        return layer

    def feature_map(self, x: torch.Tensor, layer: Optional[str] = None) -> torch.Tensor:
        raise NotImplementedError

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.feature_map(x)


class IdentityExtractor(FeatureMapExtractor):
    """Pixels in, pixels out."""
    backend = "identity"
    layers = ("pixels",)
    default_layer = "pixels"

    def feature_map(self, x: torch.Tensor, layer: Optional[str] = None) -> torch.Tensor:
        self.check_layer(layer)
        return x

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        return x.flatten(1)


class ToyExtractor(FeatureMapExtractor):
    """Seeded, weight-file-free stand-in for a pretrained backbone."""
    backend = "toy_deterministic"
    layers = ("downsample", "projection")
    default_layer = "downsample"

    def __init__(self, seed: int = 0, feature_dim: int = TOY_FEATURE_DIM, channels: int = 3):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        in_dim = channels * TOY_POOL_SIDE * TOY_POOL_SIDE
        projection = torch.randn(in_dim, feature_dim, generator=generator, dtype=torch.float64)
        self.register_buffer("projection", projection / np.sqrt(in_dim))
        self.freeze()

    def feature_map(self, x: torch.Tensor, layer: Optional[str] = None) -> torch.Tensor:
        if self.check_layer(layer) == "downsample":
            return F.avg_pool2d(x, 2)
        return self.extract(x)

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        pooled = F.adaptive_avg_pool2d(x, TOY_POOL_SIDE).flatten(1)
        return pooled @ self.projection.to(dtype=x.dtype, device=x.device)


class InceptionExtractor(FeatureMapExtractor):
    """Inception-v3 trunk loaded from a local torchvision state dict."""
    backend = "pretrained_inception"
    layers = INCEPTION_BLOCKS
    default_layer = "Mixed_7c"
    expected_input = (INCEPTION_INPUT_SIZE, INCEPTION_INPUT_SIZE)

    def __init__(self, weights_path: str):
        super().__init__()
        from torchvision.models import inception_v3

        path = Path(weights_path)
        if not path.is_file():
            raise ExtractorError(f"Inception weights file not found: {path}")
        net = inception_v3(weights=None, aux_logits=True, init_weights=False)
        try:
            state = torch.load(path, map_location="cpu", weights_only=True)
            net.load_state_dict(state)
        except Exception as e:
            raise ExtractorError(f"Could not load Inception weights from {path}: {e}") from e
        self.blocks = nn.ModuleDict({name: getattr(net, name) for name in INCEPTION_BLOCKS})
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.freeze()

    def _prepare(self, x: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, size=self.expected_input, mode="bilinear", align_corners=False)
        return (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)

    def feature_map(self, x: torch.Tensor, layer: Optional[str] = None) -> torch.Tensor:
        """Activation of ``layer`` after the internal resize to 299x299."""
        layer = self.check_layer(layer)
        x = self._prepare(x)
        for name in INCEPTION_BLOCKS:
            x = self.blocks[name](x)
            if name == layer:
                return x
        raise ExtractorError(f"Layer {layer!r} not reached")

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        return F.adaptive_avg_pool2d(self.feature_map(x, "Mixed_7c"), 1).flatten(1)


def build_extractor(backend: str, weights_path: Optional[str] = None,
                    allow_toy_fallback: bool = True, seed: int = 0,
                    device: str = "cpu") -> FeatureMapExtractor:
    """
    Construct a feature extractor.

    Args:
        backend: ``pretrained_inception``, ``toy_deterministic`` or ``identity``
        weights_path: Inception state-dict file (pretrained backend only)
        allow_toy_fallback: Degrade to the toy backend if the weights are unusable
        seed: Seed of the toy projection
        device: Torch device for the extractor

    Returns:
        A frozen extractor in eval mode

    Raises:
        ExtractorError: if the pretrained backend fails and fallback is disabled
    """
    if backend == "identity":
        extractor = IdentityExtractor()
    elif backend == "toy_deterministic":
        extractor = ToyExtractor(seed=seed)
    elif backend == "pretrained_inception":
        try:
            if weights_path is None:
                raise ExtractorError("inception_weights_path is not set")
            extractor = InceptionExtractor(weights_path)
        except ExtractorError as e:
            if not allow_toy_fallback:
                raise
            logger.warning("%s; falling back to the toy_deterministic extractor", e)
            extractor = ToyExtractor(seed=seed)
    else:
        raise ExtractorError(f"Unknown feature backend {backend!r}")
    return extractor.to(device)


@torch.no_grad()
def extract_features(extractor: FeatureMapExtractor, batch: ImageBatch,
                     chunk_size: int = 32) -> np.ndarray:
    """
    Pooled feature vectors for a batch of images.

    Args:
        extractor: Feature extractor
        batch: Channel-last images
        chunk_size: Images per forward pass

    Returns:
        float64 array [B, D]
    """
    reference = next(iter(extractor.buffers()), None)
    device = reference.device if reference is not None else torch.device("cpu")
    images = batch.to_tensor(device=device)
    features = [extractor.extract(images[start:start + chunk_size]).double().cpu()
                for start in range(0, images.shape[0], chunk_size)]
    return torch.cat(features, dim=0).numpy()

"""
Reservoir of previously refined images.

Discriminator minibatches mix a fraction of these older refinements with the
current refiner's output so the discriminator keeps penalizing artifacts the
refiner produced earlier.
"""
import math
from typing import List, Union

import numpy as np
import torch

from ..core.types import ImageBatch

Images = Union[torch.Tensor, ImageBatch]


class HistoryBuffer:
    """Bounded store of single refined images with seeded replacement and sampling."""

    def __init__(self, capacity: int = 512, seed: int = 0):
        """
        Args:
            capacity: Maximum number of stored images (0 disables the buffer)
            seed: Seed of the replacement/sampling generator
        """
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.rng_seed = seed
        self._rng = np.random.default_rng(seed)
        self._images: List[torch.Tensor] = []

    def __len__(self) -> int:
        return len(self._images)

    @property
    def size(self) -> int:
        return len(self._images)

    def snapshot(self) -> torch.Tensor:
        """Copy of the stored images as one [N, C, H, W] tensor."""
        if not self._images:
            return torch.empty(0)
        return torch.stack(self._images).clone()

    def push(self, batch: Images):
        """
        Store a batch of images.

        Images fill free slots first; once full, each new image replaces a
        uniformly chosen stored one.
        """
        images = batch.to_tensor() if isinstance(batch, ImageBatch) else batch
        if self.capacity == 0:
            return
        for image in images.detach().to("cpu").clone():
            if len(self._images) < self.capacity:
                self._images.append(image)
            else:
                self._images[int(self._rng.integers(self.capacity))] = image

    def sample_mixed(self, current: Images, fraction: float = 0.5) -> Images:
        """
        Replace part of a batch with stored images.

        Args:
            current: The current refined batch, tensor [B, C, H, W] or ImageBatch
            fraction: Share of the output drawn from the buffer

        Returns:
            A batch of the same size and type as ``current``: round(fraction * B)
            stored images (fewer if the buffer holds fewer), drawn without
            replacement, followed by the leading images of ``current``
        """
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"fraction must be in [0, 1], got {fraction}")
        as_batch = isinstance(current, ImageBatch)
        tensor = current.to_tensor() if as_batch else current
        size = tensor.shape[0]
        wanted = min(int(math.floor(fraction * size + 0.5)), len(self._images))
        if wanted == 0:
            return current

        picks = self._rng.choice(len(self._images), size=wanted, replace=False)
        history = torch.stack([self._images[i] for i in picks]).to(tensor.device, tensor.dtype)
        mixed = torch.cat([history, tensor[:size - wanted]], dim=0)
        return ImageBatch.from_tensor(mixed) if as_batch else mixed

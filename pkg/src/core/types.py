"""
Shared value types for the refinement system.

Images travel between modules as channel-last ``ImageBatch`` records with
values in [0, 1]; networks and losses work on channel-first torch tensors
obtained through ``ImageBatch.to_tensor``.
"""
import math
from dataclasses import dataclass, asdict, fields
from enum import Enum
from typing import Dict, Optional, Union

import numpy as np
import torch

from .errors import DimensionError

MIN_IMAGE_SIDE = 8


class ImageType(Enum):
    """Kinds of images handled by the evaluation harnesses."""
    SYNTHETIC = "synthetic"
    SIMGAN = "simgan"
    REFINED = "refined"
    REAL = "real"

    @classmethod
    def ordered(cls):
        """Canonical row/column order used by reports."""
        return [cls.SYNTHETIC, cls.SIMGAN, cls.REFINED, cls.REAL]


@dataclass(frozen=True)
class ImageBatch:
    """A batch of images, shape [batch, height, width, channels], values in [0, 1]."""
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 4:
            raise DimensionError(f"ImageBatch must be rank 4 [B, H, W, C], got shape {data.shape}")
        batch, height, width, _ = data.shape
        if batch < 1:
            raise DimensionError("ImageBatch must contain at least one image")
        if height < MIN_IMAGE_SIDE or width < MIN_IMAGE_SIDE:
            raise DimensionError(
                f"Images must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {height}x{width}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("ImageBatch contains non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError(
                f"ImageBatch values must lie in [0, 1], got [{data.min()}, {data.max()}]"
            )
        object.__setattr__(self, "data", data)

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    def __len__(self) -> int:
        return self.batch

    def __getitem__(self, index) -> "ImageBatch":
        """Select images, always returning a batch."""
        selected = self.data[index]
        if selected.ndim == 3:
            selected = selected[None]
        return ImageBatch(selected)

    def to_tensor(self, dtype: torch.dtype = torch.float32,
                  device: Union[str, torch.device] = "cpu") -> torch.Tensor:
        """
        Convert to a channel-first tensor.

        Returns:
            Tensor of shape [batch, channels, height, width]
        """
        return torch.from_numpy(np.ascontiguousarray(self.data.transpose(0, 3, 1, 2))).to(
            dtype=dtype, device=device
        )

    @classmethod
    def from_tensor(cls, tensor: torch.Tensor) -> "ImageBatch":
        """
        Build a batch from a channel-first tensor, clamping tiny excursions from [0, 1].

        Args:
            tensor: Tensor of shape [batch, channels, height, width]
        """
        if tensor.dim() != 4:
            raise DimensionError(f"Expected a rank-4 tensor, got shape {tuple(tensor.shape)}")
        array = tensor.detach().to("cpu", torch.float32).clamp(0.0, 1.0).numpy()
        return cls(array.transpose(0, 2, 3, 1))

    @classmethod
    def concatenate(cls, batches) -> "ImageBatch":
        """Concatenate several batches along the batch axis."""
        return cls(np.concatenate([b.data for b in batches], axis=0))


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class indices, shape [batch, height, width]."""
    data: np.ndarray
    num_classes: int

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise DimensionError(f"LabelMap must be rank 3 [B, H, W], got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            raise ValueError(f"LabelMap must hold integers, got {data.dtype}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if data.size and (data.min() < 0 or data.max() >= self.num_classes):
            raise ValueError(
                f"LabelMap values must lie in [0, {self.num_classes}), "
                f"got [{data.min()}, {data.max()}]"
            )
        object.__setattr__(self, "data", data.astype(np.int64, copy=False))

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def __len__(self) -> int:
        return self.batch

    def __getitem__(self, index) -> "LabelMap":
        selected = self.data[index]
        if selected.ndim == 2:
            selected = selected[None]
        return LabelMap(selected, self.num_classes)

    def to_tensor(self, device: Union[str, torch.device] = "cpu") -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(self.data)).to(device)

    @classmethod
    def concatenate(cls, maps) -> "LabelMap":
        maps = list(maps)
        return cls(np.concatenate([m.data for m in maps], axis=0), maps[0].num_classes)


@dataclass
class StepLog:
    """Losses and optional metrics recorded for one full-training step."""
    step: int
    refiner_loss: float
    disc_loss_real: float
    disc_loss_refined: float
    ssim_vs_real: Optional[float] = None
    fid_vs_real: Optional[float] = None
    adv_loss: Optional[float] = None

    def __post_init__(self):
        for name in ("refiner_loss", "disc_loss_real", "disc_loss_refined"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"StepLog.{name} must be finite, got {value}")

    def to_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)

    @classmethod
    def from_dict(cls, record: Dict) -> "StepLog":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in record.items() if k in names})

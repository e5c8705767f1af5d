"""
Dataset ingestion and preprocessing.

This module reads ``<root>/images/*.png`` (and ``<root>/labels/*.png`` with
matching stems), applies the crop-then-resize preprocessing, writes datasets
back in the same layout, and streams seeded shuffled batches.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from ..core.errors import DatasetError, DimensionError
from ..core.types import ImageBatch, LabelMap

logger = logging.getLogger(__name__)

IMAGES_DIR = "images"
LABELS_DIR = "labels"
IMAGE_SUFFIX = ".png"


class DatasetKind(Enum):
    """Role of a dataset in the refinement pipeline."""
    SYNTHETIC = "synthetic"
    REAL = "real"
    REFINED = "refined"


@dataclass(frozen=True)
class DatasetSpec:
    """
    Where a dataset lives and how each frame is cropped and resized.

    ``crop_height``/``crop_width`` of None extend the crop to the frame edge,
    so a spec with a zero offset and no crop size only resizes.
    """
    root_path: str
    kind: DatasetKind = DatasetKind.SYNTHETIC
    has_labels: bool = False
    crop_row: int = 0
    crop_col: int = 0
    crop_height: Optional[int] = None
    crop_width: Optional[int] = None
    out_height: int = 80
    out_width: int = 160

    def __post_init__(self):
        if self.out_height < 8 or self.out_width < 8:
            raise DimensionError(
                f"Output dims must be >= 8, got {self.out_height}x{self.out_width}"
            )
        if self.crop_row < 0 or self.crop_col < 0:
            raise DimensionError("Crop offsets must be >= 0")
        for name in ("crop_height", "crop_width"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise DimensionError(f"{name} must be >= 1")

    @property
    def images_dir(self) -> Path:
        return Path(self.root_path) / IMAGES_DIR

    @property
    def labels_dir(self) -> Path:
        return Path(self.root_path) / LABELS_DIR

    def crop_window(self, height: int, width: int) -> Tuple[int, int, int, int]:
        """
        Resolve the crop window for a frame of the given size.

        Returns:
            Tuple (row, col, crop_height, crop_width)

        Raises:
            DimensionError: if the window does not fit inside the frame
        """
        crop_h = self.crop_height if self.crop_height is not None else height - self.crop_row
        crop_w = self.crop_width if self.crop_width is not None else width - self.crop_col
        if (crop_h < 1 or crop_w < 1 or self.crop_row + crop_h > height
                or self.crop_col + crop_w > width):
            raise DimensionError(
                f"Crop window rows [{self.crop_row}, {self.crop_row + crop_h}) x "
                f"cols [{self.crop_col}, {self.crop_col + crop_w}) exceeds frame {height}x{width}"
            )
        return self.crop_row, self.crop_col, crop_h, crop_w


@dataclass
class ImageDataset:
    """Fully materialized images with optional labels and their source names."""
    images: ImageBatch
    labels: Optional[LabelMap] = None
    names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.names:
            self.names = [f"{i:06d}" for i in range(len(self.images))]
        if len(self.names) != len(self.images):
            raise DatasetError("names and images have different lengths")
        if self.labels is not None:
            if self.labels.shape != (self.images.batch, self.images.height, self.images.width):
                raise DimensionError(
                    f"Label shape {self.labels.shape} does not match images "
                    f"{self.images.data.shape[:3]}"
                )

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, indices: Sequence[int]) -> "ImageDataset":
        """Select a subset of items, preserving the given order."""
        indices = np.asarray(indices, dtype=np.int64)
        return ImageDataset(
            images=ImageBatch(self.images.data[indices]),
            labels=None if self.labels is None else LabelMap(self.labels.data[indices],
                                                             self.labels.num_classes),
            names=[self.names[i] for i in indices],
        )

    def with_images(self, images: ImageBatch) -> "ImageDataset":
        """Same names and labels with replaced images (annotation is carried over)."""
        return replace(self, images=images)


def _crop_tensor(tensor: torch.Tensor, spec: DatasetSpec) -> torch.Tensor:
    row, col, crop_h, crop_w = spec.crop_window(tensor.shape[-2], tensor.shape[-1])
    return tensor[..., row:row + crop_h, col:col + crop_w]


def crop_resize(image: ImageBatch, spec: DatasetSpec) -> ImageBatch:
    """
    Crop each image to the ``DatasetSpec`` window, then resize bilinearly to the output size.

    Args:
        image: Batch of source frames
        spec: Dataset spec holding the crop window and output dims

    Returns:
        Batch of shape [B, out_height, out_width, C]

    Raises:
        DimensionError: if the crop window is out of bounds
    """
    tensor = _crop_tensor(image.to_tensor(torch.float32), spec)
    if tuple(tensor.shape[-2:]) != (spec.out_height, spec.out_width):
        tensor = F.interpolate(tensor, size=(spec.out_height, spec.out_width),
                               mode="bilinear", align_corners=False)
    return ImageBatch.from_tensor(tensor)


def crop_resize_labels(labels: LabelMap, spec: DatasetSpec) -> LabelMap:
    """
    Crop and nearest-neighbor resize label maps, never inventing class indices.
    """
    tensor = _crop_tensor(labels.to_tensor()[:, None].float(), spec)
    if tuple(tensor.shape[-2:]) != (spec.out_height, spec.out_width):
        tensor = F.interpolate(tensor, size=(spec.out_height, spec.out_width), mode="nearest")
    return LabelMap(tensor[:, 0].round().long().numpy(), labels.num_classes)


def read_png_image(path: Union[str, Path]) -> np.ndarray:
    """Decode an image file to a float32 [H, W, 3] array in [0, 1]."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0


def read_png_labels(path: Union[str, Path]) -> np.ndarray:
    """Decode a single-channel (or palette) PNG of class indices to int64 [H, W]."""
    with Image.open(path) as img:
        if img.mode not in ("L", "P", "I", "I;16"):
            img = img.convert("L")
        return np.asarray(img).astype(np.int64)


def write_png_image(array: np.ndarray, path: Union[str, Path]):
    """Encode a [H, W, 3] array in [0, 1] as an 8-bit RGB PNG."""
    pixels = np.clip(np.rint(np.asarray(array) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PNG")


def write_png_labels(array: np.ndarray, path: Union[str, Path]):
    """Encode a [H, W] class-index array as a single-channel PNG."""
    values = np.asarray(array)
    if values.size and values.max() > 255:
        raise DatasetError(f"Label values above 255 cannot be stored as 8-bit PNG: {path}")
    Image.fromarray(values.astype(np.uint8)).save(path, format="PNG")


class ImageDirectory:
    """
    Lazy, ordered view over a dataset directory.

    Iterating yields ``(ImageBatch, Optional[LabelMap])`` pairs of single
    preprocessed images in lexicographic filename order. Undecodable files are
    skipped with a warning and counted in ``skipped`` unless ``strict`` is set.
    """

    def __init__(self, spec: DatasetSpec, num_classes: int = 256,
                 strict: bool = False, workers: int = 1):
        """
        Initialize the directory view.

        Args:
            spec: Dataset spec
            num_classes: Number of classes stored in label files
            strict: Raise instead of skipping undecodable files
            workers: Decoding threads (output order is unaffected)

        Raises:
            DatasetError: if the images directory (or required labels directory) is missing
        """
        self.spec = spec
        self.num_classes = num_classes
        self.strict = strict
        self.workers = max(1, workers)
        self.skipped: List[str] = []
        if not spec.images_dir.is_dir():
            raise DatasetError(f"Dataset directory not found: {spec.images_dir}")
        if spec.has_labels and not spec.labels_dir.is_dir():
            raise DatasetError(f"Label directory not found: {spec.labels_dir}")
        self.paths = sorted(spec.images_dir.glob(f"*{IMAGE_SUFFIX}"), key=lambda p: p.name)
        if spec.has_labels:
            for path in self.paths:
                if not (spec.labels_dir / path.name).is_file():
                    raise DatasetError(f"Missing label file for image {path.name}")

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def names(self) -> List[str]:
        return [p.stem for p in self.paths]

    def _decode(self, path: Path):
        try:
            image = ImageBatch(read_png_image(path)[None])
            labels = None
            if self.spec.has_labels:
                labels = LabelMap(read_png_labels(self.spec.labels_dir / path.name)[None],
                                  self.num_classes)
                if labels.shape[1:] != (image.height, image.width):
                    raise DimensionError(
                        f"Label size {labels.shape[1:]} differs from image size for {path.name}"
                    )
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            if self.strict:
                raise DatasetError(f"Could not decode {path}: {exc}") from exc
            return path, None
        image = crop_resize(image, self.spec)
        if labels is not None:
            labels = crop_resize_labels(labels, self.spec)
        return path, (image, labels)

    def iter_named(self) -> Iterator[Tuple[str, ImageBatch, Optional[LabelMap]]]:
        """Yield ``(stem, image, labels)`` triples."""
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = pool.map(self._decode, self.paths)
                yield from self._filter(results)
        else:
            yield from self._filter(map(self._decode, self.paths))

    def _filter(self, results):
        for path, item in results:
            if item is None:
                logger.warning("Skipping undecodable file %s", path)
                self.skipped.append(path.name)
                continue
            yield (path.stem,) + item

    def __iter__(self) -> Iterator[Tuple[ImageBatch, Optional[LabelMap]]]:
        for _, image, labels in self.iter_named():
            yield image, labels

    def load(self) -> ImageDataset:
        """Decode everything into an ImageDataset."""
        names, images, labels = [], [], []
        for name, image, label in self.iter_named():
            names.append(name)
            images.append(image)
            labels.append(label)
        if not images:
            raise DatasetError(f"No decodable images in {self.spec.images_dir}")
        label_map = LabelMap.concatenate(labels) if self.spec.has_labels else None
        if self.skipped:
            logger.warning("Skipped %d undecodable file(s) in %s",
                           len(self.skipped), self.spec.images_dir)
        return ImageDataset(ImageBatch.concatenate(images), label_map, names)


def load_image_dir(spec: DatasetSpec, num_classes: int = 256,
                   strict: bool = False, workers: int = 1) -> ImageDirectory:
    """
    Open a dataset directory for lazy, ordered iteration.

    Args:
        spec: Dataset spec
        num_classes: Number of label classes
        strict: Turn undecodable-file warnings into errors
        workers: Decoding threads

    Returns:
        ImageDirectory yielding (ImageBatch, Optional[LabelMap]) pairs
    """
    return ImageDirectory(spec, num_classes=num_classes, strict=strict, workers=workers)


def load_dataset(spec: DatasetSpec, num_classes: int = 256,
                 strict: bool = False, workers: int = 1) -> ImageDataset:
    """Convenience function to fully load a dataset directory."""
    return load_image_dir(spec, num_classes, strict, workers).load()


def has_label_dir(root: Union[str, Path]) -> bool:
    return (Path(root) / LABELS_DIR).is_dir()


def save_image_dir(dataset: ImageDataset, root: Union[str, Path]) -> Path:
    """
    Write a dataset in the standard ``images/`` + ``labels/`` layout.

    Args:
        dataset: Images, optional labels and stems
        root: Destination directory

    Returns:
        The root path
    """
    root = Path(root)
    (root / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
    if dataset.labels is not None:
        (root / LABELS_DIR).mkdir(parents=True, exist_ok=True)
    for index, name in enumerate(dataset.names):
        write_png_image(dataset.images.data[index], root / IMAGES_DIR / f"{name}{IMAGE_SUFFIX}")
        if dataset.labels is not None:
            write_png_labels(dataset.labels.data[index], root / LABELS_DIR / f"{name}{IMAGE_SUFFIX}")
    return root


def _length(dataset) -> int:
    if isinstance(dataset, tuple):
        lengths = {_length(part) for part in dataset}
        if len(lengths) != 1:
            raise DatasetError("Aligned datasets passed to batch_iter differ in length")
        return lengths.pop()
    return len(dataset)


def _take(dataset, indices: np.ndarray):
    if isinstance(dataset, tuple):
        return tuple(_take(part, indices) for part in dataset)
    if isinstance(dataset, ImageDataset):
        return dataset.subset(indices)
    if isinstance(dataset, torch.Tensor):
        return dataset[torch.from_numpy(indices)]
    return dataset[indices]


def batch_iter(dataset, batch_size: int, seed: int) -> Iterator:
    """
    Infinite stream of shuffled batches.

    Each epoch is a seeded permutation split into ``len // batch_size``
    disjoint batches of exactly ``batch_size`` items; a trailing remainder is
    dropped for that epoch.

    Args:
        dataset: Tensor, array, ImageBatch, LabelMap, ImageDataset, or a
            tuple of aligned ones (indexed together)
        batch_size: Items per batch
        seed: Shuffle seed

    Raises:
        DatasetError: if batch_size exceeds the dataset size
    """
    size = _length(dataset)
    if batch_size < 1 or batch_size > size:
        raise DatasetError(f"batch_size {batch_size} must be in [1, {size}]")
    return _shuffled_batches(dataset, size, batch_size, seed)


def _shuffled_batches(dataset, size: int, batch_size: int, seed: int) -> Iterator:
    rng = np.random.default_rng(seed)
    while True:
        order = rng.permutation(size)
        for start in range(0, size - batch_size + 1, batch_size):
            yield _take(dataset, order[start:start + batch_size])

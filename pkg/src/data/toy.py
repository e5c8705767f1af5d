"""
Procedural toy scenes with a controlled synthetic-to-real domain gap.

Both domains are rendered from the same label maps: the synthetic domain
paints every class in a flat color, the real domain adds per-class texture
noise, a global color-tone shift and a 3x3 box blur.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from ..core.types import ImageBatch, LabelMap
from .pipeline import ImageDataset

NOISE_SIGMA = 0.08
PALETTE_SEED = 20230
# Hue rotation about the gray axis plus a small desaturation and warm offset.
TONE_ROTATION_DEGREES = 32.0
TONE_SATURATION = 0.9
TONE_OFFSET = np.array([0.06, 0.02, -0.05], dtype=np.float64)
BASE_PALETTE = np.array([
    [0.50, 0.50, 0.50],
    [0.20, 0.55, 0.85],
    [0.85, 0.30, 0.25],
    [0.25, 0.70, 0.30],
    [0.90, 0.80, 0.20],
    [0.55, 0.30, 0.75],
    [0.15, 0.80, 0.80],
    [0.95, 0.55, 0.15],
], dtype=np.float64)


class GapKind(Enum):
    """Kinds of procedural domain gap."""
    FLAT_VS_TEXTURED = "flat_vs_textured"


@dataclass(frozen=True)
class ToySceneSpec:
    """Size and seed of a toy synthetic/real dataset pair."""
    num_images: int = 32
    height: int = 32
    width: int = 64
    num_classes: int = 4
    seed: int = 7
    gap_kind: GapKind = GapKind.FLAT_VS_TEXTURED

    def __post_init__(self):
        if self.num_images < 1:
            raise ValueError("num_images must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.height < 8 or self.width < 8:
            raise ValueError("height and width must be >= 8")


@dataclass
class ToyDataset:
    """Paired toy domains sharing scene geometry index by index."""
    synthetic: ImageDataset
    real: ImageDataset


def class_palette(num_classes: int) -> np.ndarray:
    """Flat class colors, identical for every scene seed."""
    if num_classes <= len(BASE_PALETTE):
        return BASE_PALETTE[:num_classes].copy()
    rng = np.random.default_rng(PALETTE_SEED)
    extra = rng.uniform(0.1, 0.9, size=(num_classes - len(BASE_PALETTE), 3))
    return np.concatenate([BASE_PALETTE, extra], axis=0)


def _tone_matrix() -> np.ndarray:
    """Rotation about the (1, 1, 1) axis blended toward gray."""
    theta = np.deg2rad(TONE_ROTATION_DEGREES)
    axis = np.ones(3) / np.sqrt(3.0)
    cross = np.array([[0, -axis[2], axis[1]],
                      [axis[2], 0, -axis[0]],
                      [-axis[1], axis[0], 0]])
    rotation = np.eye(3) + np.sin(theta) * cross + (1 - np.cos(theta)) * cross @ cross
    gray = np.full((3, 3), 1.0 / 3.0)
    return TONE_SATURATION * rotation + (1 - TONE_SATURATION) * gray


def _draw_scene(rng: np.random.Generator, height: int, width: int, num_classes: int) -> np.ndarray:
    """A horizon split plus a handful of rectangles and ellipses."""
    labels = np.zeros((height, width), dtype=np.int64)
    rows, cols = np.mgrid[0:height, 0:width]
    horizon = int(rng.integers(height // 4, height // 2 + 1))
    labels[:horizon] = 1 % num_classes
    for _ in range(int(rng.integers(3, 7))):
        cls = int(rng.integers(1, num_classes)) if num_classes > 2 else 1
        center_r = rng.uniform(0, height)
        center_c = rng.uniform(0, width)
        half_h = rng.uniform(height * 0.08, height * 0.3)
        half_w = rng.uniform(width * 0.05, width * 0.2)
        if rng.random() < 0.5:
            mask = (np.abs(rows - center_r) <= half_h) & (np.abs(cols - center_c) <= half_w)
        else:
            mask = ((rows - center_r) / half_h) ** 2 + ((cols - center_c) / half_w) ** 2 <= 1.0
        labels[mask] = cls
    return labels


def _render_real(labels: np.ndarray, flat: np.ndarray, rng: np.random.Generator,
                 noise_gain: np.ndarray, tone: np.ndarray) -> np.ndarray:
    noise = rng.normal(0.0, NOISE_SIGMA, size=flat.shape) * noise_gain[labels][..., None]
    textured = flat + noise
    shifted = textured @ tone.T + TONE_OFFSET
    blurred = ndimage.uniform_filter(shifted, size=(3, 3, 1), mode="reflect")
    return np.clip(blurred, 0.0, 1.0)


def make_toy_dataset(spec: ToySceneSpec) -> ToyDataset:
    """
    Generate a toy synthetic/real pair.

    Args:
        spec: Scene count, size, class count and seed

    Returns:
        ToyDataset whose synthetic and real label maps are equal arrays;
        bit-identical for equal specs
    """
    rng = np.random.default_rng(spec.seed)
    palette = class_palette(spec.num_classes)
    noise_gain = np.random.default_rng(PALETTE_SEED + 1).uniform(0.5, 1.5, size=spec.num_classes)
    tone = _tone_matrix()

    labels = np.empty((spec.num_images, spec.height, spec.width), dtype=np.int64)
    synthetic = np.empty((spec.num_images, spec.height, spec.width, 3), dtype=np.float32)
    real = np.empty_like(synthetic)
    for index in range(spec.num_images):
        scene = _draw_scene(rng, spec.height, spec.width, spec.num_classes)
        flat = palette[scene]
        labels[index] = scene
        synthetic[index] = flat
        real[index] = _render_real(scene, flat, rng, noise_gain, tone)

    names = [f"scene_{index:05d}" for index in range(spec.num_images)]
    return ToyDataset(
        synthetic=ImageDataset(ImageBatch(synthetic), LabelMap(labels.copy(), spec.num_classes), names),
        real=ImageDataset(ImageBatch(real), LabelMap(labels.copy(), spec.num_classes), list(names)),
    )

"""Pixel accuracy and intersection-over-union for label maps."""
import numpy as np

from ..core.errors import DimensionError
from ..core.types import LabelMap


def _check(pred: LabelMap, gt: LabelMap):
    if pred.shape != gt.shape:
        raise DimensionError(f"Prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if pred.num_classes != gt.num_classes:
        raise ValueError(f"num_classes differ: {pred.num_classes} vs {gt.num_classes}")


def confusion_matrix(pred: LabelMap, gt: LabelMap, num_classes: int = None) -> np.ndarray:
    """Counts [num_classes, num_classes] with ground truth along rows."""
    _check(pred, gt)
    num_classes = num_classes or gt.num_classes
    flat = gt.data.ravel() * num_classes + pred.data.ravel()
    return np.bincount(flat, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def pixel_accuracy(pred: LabelMap, gt: LabelMap) -> float:
    """Fraction of pixels whose predicted class equals the ground truth."""
    _check(pred, gt)
    return float(np.mean(pred.data == gt.data))


def class_iou(pred: LabelMap, gt: LabelMap, num_classes: int = None) -> np.ndarray:
    """
    Per-class IoU.

    Returns:
        Array [num_classes]; NaN for classes absent from both maps
    """
    counts = confusion_matrix(pred, gt, num_classes).astype(np.float64)
    intersection = np.diag(counts)
    union = counts.sum(axis=0) + counts.sum(axis=1) - intersection
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, intersection / union, np.nan)


def miou(pred: LabelMap, gt: LabelMap, num_classes: int = None) -> float:
    """
    Mean IoU over the classes present in the prediction or the ground truth.

    Args:
        pred: Predicted labels
        gt: Ground-truth labels
        num_classes: Defaults to ``gt.num_classes``

    Returns:
        Scalar in [0, 1]
    """
    return float(np.nanmean(class_iou(pred, gt, num_classes)))

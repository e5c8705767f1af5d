"""
Automatic checkpoint selection from discriminator losses.

The best refiner is taken where the discriminator loss on real images is low
while the loss on refined images is high, i.e. where the smoothed gap
``disc_loss_refined - disc_loss_real`` peaks.
"""
from typing import Iterable, Optional, Sequence

import numpy as np

from ..core.types import StepLog


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    """
    Centered moving average; the window shrinks at both ends of the series.

    Args:
        values: Series to smooth
        window: Odd window length (1 leaves the series unchanged)
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    values = np.asarray(values, dtype=np.float64)
    cumulative = np.concatenate([[0.0], np.cumsum(values)])
    half = window // 2
    index = np.arange(len(values))
    lo = np.maximum(index - half, 0)
    hi = np.minimum(index + half + 1, len(values))
    return (cumulative[hi] - cumulative[lo]) / (hi - lo)


def selection_criterion(logs: Sequence[StepLog], smooth_window: int = 5) -> np.ndarray:
    """Smoothed ``disc_loss_refined - disc_loss_real`` for every log entry."""
    refined = moving_average([log.disc_loss_refined for log in logs], smooth_window)
    real = moving_average([log.disc_loss_real for log in logs], smooth_window)
    return refined - real


def select_best_checkpoint(logs: Sequence[StepLog], smooth_window: int = 5,
                           candidates: Optional[Iterable[int]] = None) -> int:
    """
    Index of the log entry with the largest smoothed discriminator-loss gap.

    Args:
        logs: Per-step logs, in step order
        smooth_window: Moving-average window applied to both loss series
        candidates: Restrict the choice to these indices (e.g. steps that have a checkpoint)

    Returns:
        Index into ``logs``; the earliest index wins ties

    Raises:
        ValueError: if ``logs`` or ``candidates`` is empty
    """
    if not logs:
        raise ValueError("Cannot select a checkpoint from an empty loss log")
    criterion = selection_criterion(logs, smooth_window)
    indices = np.arange(len(logs)) if candidates is None else np.array(sorted(set(candidates)), dtype=np.int64)
    if indices.size == 0:
        raise ValueError("No candidate steps to select from")
    if indices.min() < 0 or indices.max() >= len(logs):
        raise ValueError("Candidate index out of range")
    return int(indices[np.argmax(criterion[indices])])

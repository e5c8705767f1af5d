"""Downstream segmentation train/test matrix."""
from .harness import (
    MatrixReport,
    train_seg,
    eval_seg,
    predict_labels,
    split_indices,
    save_masks,
    check_diagonal_dominance,
    run_matrix
)

__all__ = [
    "MatrixReport",
    "train_seg",
    "eval_seg",
    "predict_labels",
    "split_indices",
    "save_masks",
    "check_diagonal_dominance",
    "run_matrix"
]

"""Image-quality and segmentation metrics."""
from .fid import GaussianMoments, fit_moments, frechet_distance, fid
from .ssim import ssim, ssim_map, ssim_per_image, dataset_ssim, gaussian_window, pair_indices
from .segmentation import pixel_accuracy, miou, class_iou, confusion_matrix
from .report import MetricReport, evaluate_against_real

__all__ = [
    "GaussianMoments",
    "fit_moments",
    "frechet_distance",
    "fid",
    "ssim",
    "ssim_map",
    "ssim_per_image",
    "dataset_ssim",
    "gaussian_window",
    "pair_indices",
    "pixel_accuracy",
    "miou",
    "class_iou",
    "confusion_matrix",
    "MetricReport",
    "evaluate_against_real"
]

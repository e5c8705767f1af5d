"""
Synthetic-to-Real Image Refinement

Adversarial refiner training with perceptual pretraining, evaluated with FID,
SSIM and a downstream segmentation train/test matrix.
"""
from .sim2real import RefinementExperiment, refine_dataset, make_toy_data
from .core import ExperimentConfig, TrainConfig, SegConfig, DataConfig, load_config
from .networks import RefinerNet, DiscriminatorNet, SegNet
from .training import run_training, select_best_checkpoint
from .metrics import fid, ssim, miou, pixel_accuracy
from .segmentation import run_matrix, MatrixReport

__version__ = "1.0.0"

__all__ = [
    "RefinementExperiment",
    "refine_dataset",
    "make_toy_data",
    "ExperimentConfig",
    "TrainConfig",
    "SegConfig",
    "DataConfig",
    "load_config",
    "RefinerNet",
    "DiscriminatorNet",
    "SegNet",
    "run_training",
    "select_best_checkpoint",
    "fid",
    "ssim",
    "miou",
    "pixel_accuracy",
    "run_matrix",
    "MatrixReport",
]

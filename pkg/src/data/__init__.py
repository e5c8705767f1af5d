"""Dataset ingestion, preprocessing and toy data for the refinement system."""
from .pipeline import (
    DatasetKind,
    DatasetSpec,
    ImageDataset,
    ImageDirectory,
    crop_resize,
    crop_resize_labels,
    load_image_dir,
    load_dataset,
    save_image_dir,
    has_label_dir,
    batch_iter,
    read_png_image,
    read_png_labels,
    write_png_image,
    write_png_labels
)
from .toy import GapKind, ToySceneSpec, ToyDataset, make_toy_dataset, class_palette

__all__ = [
    "DatasetKind",
    "DatasetSpec",
    "ImageDataset",
    "ImageDirectory",
    "crop_resize",
    "crop_resize_labels",
    "load_image_dir",
    "load_dataset",
    "save_image_dir",
    "has_label_dir",
    "batch_iter",
    "read_png_image",
    "read_png_labels",
    "write_png_image",
    "write_png_labels",
    "GapKind",
    "ToySceneSpec",
    "ToyDataset",
    "make_toy_dataset",
    "class_palette"
]

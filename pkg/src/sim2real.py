"""
High-level experiment interface tying the pipeline together.

``RefinementExperiment`` loads datasets the way the configuration describes,
trains refiners, refines datasets with a checkpoint, evaluates image quality
and runs the segmentation matrix. The command-line interface is a thin layer
over this class.
"""
import logging
import shutil
from dataclasses import replace
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

from PIL import Image

from .core.checkpoint import Checkpoint, load_checkpoint
from .core.config import ExperimentConfig
from .core.errors import ConfigError, DimensionError
from .core.seeding import derive_seed
from .core.types import ImageType
from .data.pipeline import (
    DatasetKind,
    DatasetSpec,
    ImageDataset,
    LABELS_DIR,
    has_label_dir,
    load_dataset,
    save_image_dir
)
from .data.toy import ToySceneSpec, make_toy_dataset
from .losses.features import FeatureMapExtractor, build_extractor
from .metrics.fid import fid
from .metrics.report import MetricReport, evaluate_against_real
from .metrics.ssim import dataset_ssim
from .networks.refiner import RefinerNet, refine_batch
from .segmentation.harness import MatrixReport, run_matrix
from .training.trainer import TrainResult, load_refiner, run_training

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class RefinementExperiment:
    """
    One configured refinement experiment.

    Covers:
    - Loading (optionally cropping) image datasets at the configured size
    - Training a refiner and selecting its best checkpoint
    - Refining a dataset while carrying its labels over unchanged
    - FID / SSIM evaluation against real images
    - The downstream segmentation train/test matrix
    """

    def __init__(self, config: Optional[ExperimentConfig] = None):
        """
        Args:
            config: Effective configuration; defaults when None
        """
        self.config = config or ExperimentConfig()
        self._extractor: Optional[FeatureMapExtractor] = None

    @property
    def extractor(self) -> FeatureMapExtractor:
        """Feature extractor of the configured backend, built on first use."""
        if self._extractor is None:
            train = self.config.train
            self._extractor = build_extractor(train.feature_backend, train.inception_weights_path,
                                              train.allow_toy_fallback, seed=train.seed,
                                              device=train.device)
        return self._extractor

    def dataset_spec(self, root: PathLike, kind: DatasetKind = DatasetKind.SYNTHETIC,
                     has_labels: Optional[bool] = None,
                     size: Optional[Tuple[int, int]] = None) -> DatasetSpec:
        """
        Spec for a dataset root; the configured crop applies only with ``data.apply_crop``.

        ``size`` (height, width) replaces the configured image size.
        """
        data, train = self.config.data, self.config.train
        height, width = size or (train.image_height, train.image_width)
        if has_labels is None:
            has_labels = has_label_dir(root)
        crop = {}
        if data.apply_crop:
            crop = dict(crop_row=data.crop_row, crop_col=data.crop_col,
                        crop_height=data.crop_height, crop_width=data.crop_width)
        return DatasetSpec(str(root), kind, has_labels,
                           out_height=height, out_width=width, **crop)

    def load(self, root: PathLike, kind: DatasetKind = DatasetKind.SYNTHETIC,
             has_labels: Optional[bool] = None, num_classes: Optional[int] = None,
             size: Optional[Tuple[int, int]] = None) -> ImageDataset:
        """Load a dataset directory at the configured image size (or ``size``)."""
        data = self.config.data
        return load_dataset(self.dataset_spec(root, kind, has_labels, size),
                            num_classes=num_classes or self.config.seg.num_classes,
                            strict=data.strict, workers=data.workers)

    def preprocess(self, input_root: PathLike, output_dir: PathLike) -> Path:
        """
        Crop every frame with the configured ``data.crop_*`` window, resize it to
        the configured image size and write the result as a new dataset.
        """
        data, train = self.config.data, self.config.train
        spec = DatasetSpec(str(input_root), DatasetKind.SYNTHETIC, has_label_dir(input_root),
                           crop_row=data.crop_row, crop_col=data.crop_col,
                           crop_height=data.crop_height, crop_width=data.crop_width,
                           out_height=train.image_height, out_width=train.image_width)
        dataset = load_dataset(spec, num_classes=256, strict=data.strict, workers=data.workers)
        logger.info("Preprocessed %d images from %s", len(dataset), input_root)
        return save_image_dir(dataset, output_dir)

    def required_root(self, key: str) -> str:
        value = getattr(self.config.data, key)
        if value is None:
            raise ConfigError(f"data.{key} is not set")
        return value

    def train(self, output_dir: PathLike) -> TrainResult:
        """
        Train a refiner on ``data.synthetic_root`` against ``data.real_root``.

        Args:
            output_dir: Receives checkpoints, ``loss_log.csv`` and ``selection.json``
        """
        synthetic = self.load(self.required_root("synthetic_root"), DatasetKind.SYNTHETIC, has_labels=False)
        real = self.load(self.required_root("real_root"), DatasetKind.REAL, has_labels=False)
        logger.info("Training on %d synthetic and %d real images", len(synthetic), len(real))
        return run_training(self.config.train, synthetic, real, output_dir, extractor=self.extractor)

    def load_refiner(self, checkpoint: PathLike) -> RefinerNet:
        return load_refiner(load_checkpoint(checkpoint), device=self.config.train.device)

    def checkpoint_size(self, ckpt: Checkpoint, check_config: bool = True) -> Tuple[int, int]:
        """
        Image size (height, width) a checkpoint was trained on.

        Checkpoints without a config record fall back to the configured size.

        Raises:
            DimensionError: if ``check_config`` and the configured size differs
        """
        train = self.config.train
        configured = (train.image_height, train.image_width)
        record = ckpt.config or {}
        if "image_height" not in record or "image_width" not in record:
            return configured
        trained = (int(record["image_height"]), int(record["image_width"]))
        if check_config and trained != configured:
            raise DimensionError(
                f"Checkpoint was trained on {trained[0]}x{trained[1]} images but the config asks for "
                f"{configured[0]}x{configured[1]}"
            )
        return trained

    def refine(self, checkpoint: PathLike, dataset_root: PathLike, output_dir: PathLike,
               check_config: bool = True) -> Path:
        """
        Refine every image of a dataset directory at the checkpoint's image size.

        Refined PNGs keep their source file names. Label files are copied
        byte for byte when they already have the refined size; otherwise the
        resized labels are written.

        Args:
            checkpoint: Checkpoint file
            dataset_root: Dataset to refine
            output_dir: Destination dataset root
            check_config: Reject a configured image size that differs from the checkpoint's

        Returns:
            The output dataset root
        """
        ckpt = load_checkpoint(checkpoint)
        size = self.checkpoint_size(ckpt, check_config)
        refiner = load_refiner(ckpt, device=self.config.train.device)
        with_labels = has_label_dir(dataset_root)
        source = self.load(dataset_root, DatasetKind.SYNTHETIC, has_labels=with_labels,
                           num_classes=256, size=size)
        refined = refine_dataset(refiner, source)
        output_dir = Path(output_dir)
        copy_labels = with_labels and _labels_match(Path(dataset_root), source)
        save_image_dir(replace(refined, labels=None) if copy_labels else refined, output_dir)
        if copy_labels:
            (output_dir / LABELS_DIR).mkdir(parents=True, exist_ok=True)
            for name in source.names:
                shutil.copyfile(Path(dataset_root) / LABELS_DIR / f"{name}.png",
                                output_dir / LABELS_DIR / f"{name}.png")
        logger.info("Refined %d images into %s", len(refined), output_dir)
        return output_dir

    def evaluate(self, kind: str, set_a: PathLike, set_b: PathLike) -> float:
        """
        FID or SSIM between two dataset directories.

        Args:
            kind: ``fid`` or ``ssim``
            set_a: First dataset root
            set_b: Second dataset root
        """
        a = self.load(set_a, has_labels=False)
        b = self.load(set_b, has_labels=False)
        if kind == "fid":
            return fid(a.images, b.images, self.extractor)
        if kind == "ssim":
            return dataset_ssim(a.images, b.images, seed=derive_seed(self.config.train.seed, "pairing"),
                                names_a=a.names, names_b=b.names)
        raise ValueError(f"Unknown metric kind {kind!r}")

    def quality_report(self, arms: Mapping[str, PathLike], real_root: PathLike) -> MetricReport:
        """FID and SSIM of each named dataset root against the real images."""
        real = self.load(real_root, DatasetKind.REAL, has_labels=False)
        images = {name: self.load(root, has_labels=False).images for name, root in arms.items()}
        return evaluate_against_real(images, real.images, self.extractor, seed=self.config.train.seed)

    def seg_matrix(self, output_dir: Optional[PathLike] = None,
                   refined_root: Optional[PathLike] = None) -> MatrixReport:
        """
        Run the segmentation matrix over the configured datasets.

        Args:
            output_dir: Receives the CSV report, split manifest and masks
            refined_root: Overrides ``data.refined_root``
        """
        data = self.config.data
        roots: Dict[ImageType, Optional[str]] = {
            ImageType.SYNTHETIC: self.required_root("synthetic_root"),
            ImageType.SIMGAN: data.simgan_root,
            ImageType.REFINED: str(refined_root) if refined_root else data.refined_root,
            ImageType.REAL: self.required_root("real_root"),
        }
        datasets = {image_type: self.load(root, has_labels=True)
                    for image_type, root in roots.items() if root is not None}
        return run_matrix(datasets, self.config.seg, output_dir,
                          show_progress=self.config.train.show_progress)


def _labels_match(root: Path, dataset: ImageDataset) -> bool:
    if not dataset.names:
        return False
    with Image.open(root / LABELS_DIR / f"{dataset.names[0]}.png") as label:
        return label.size == (dataset.images.width, dataset.images.height)


def refine_dataset(refiner: RefinerNet, dataset: ImageDataset) -> ImageDataset:
    """Refine a loaded dataset; names and labels are carried over unchanged."""
    return dataset.with_images(refine_batch(refiner, dataset.images))


def make_toy_data(output_dir: PathLike, spec: Optional[ToySceneSpec] = None) -> Dict[str, Path]:
    """
    Write a toy synthetic/real pair as ``<output_dir>/synthetic`` and ``<output_dir>/real``.

    Returns:
        Mapping of domain name to dataset root
    """
    toy = make_toy_dataset(spec or ToySceneSpec())
    output_dir = Path(output_dir)
    return {
        "synthetic": save_image_dir(toy.synthetic, output_dir / "synthetic"),
        "real": save_image_dir(toy.real, output_dir / "real"),
    }

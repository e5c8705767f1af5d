"""
Downstream segmentation experiment.

One segmentation network is trained per image type (synthetic, optionally
simgan, refined, real) with a shared architecture and budget, then scored on
the held-out split of every type. The resulting train-by-test matrices of mIoU
and pixel accuracy show how much of the domain gap a refiner closes.
"""
import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from PIL import Image
from tqdm import tqdm

from ..core.config import SegConfig
from ..core.errors import DatasetError, NonFiniteLossError
from ..core.seeding import derive_seed
from ..core.types import ImageBatch, ImageType, LabelMap
from ..data.pipeline import ImageDataset, batch_iter
from ..data.toy import class_palette
from ..metrics.segmentation import class_iou, confusion_matrix
from ..networks.factory import NetKind, init_params
from ..networks.segnet import seg_forward

logger = logging.getLogger(__name__)

MATRIX_CSV_NAME = "matrix_report.csv"
SPLITS_NAME = "splits.json"
MASKS_DIR = "masks"

# Types rendered from the synthetic scenes share its labels and its split
SYNTHETIC_DERIVED = (ImageType.SYNTHETIC, ImageType.SIMGAN, ImageType.REFINED)


def _percent_text(fraction: float) -> str:
    """Exact decimal percent of a fraction; ``_fraction_of`` recovers the float bit for bit."""
    return format(Decimal(repr(float(fraction))).scaleb(2).normalize(), "f")


def _fraction_of(percent_text: str) -> float:
    return float(Decimal(percent_text).scaleb(-2))


@dataclass
class MatrixReport:
    """Train-type by test-type mIoU and pixel accuracy (fractions)."""
    types: List[ImageType]
    miou: np.ndarray
    pixel_acc: np.ndarray
    n_test: int = 0
    seg_config: Dict = field(default_factory=dict)

    def __post_init__(self):
        size = len(self.types)
        self.miou = np.asarray(self.miou, dtype=np.float64)
        self.pixel_acc = np.asarray(self.pixel_acc, dtype=np.float64)
        if self.miou.shape != (size, size) or self.pixel_acc.shape != (size, size):
            raise ValueError(f"Matrices must be {size}x{size}")

    def index(self, image_type: Union[ImageType, str]) -> int:
        return self.types.index(ImageType(image_type))

    def entry(self, train: Union[ImageType, str], test: Union[ImageType, str],
              metric: str = "miou") -> float:
        """Value for (train type, test type); metric is ``miou`` or ``pixel_acc``."""
        matrix = self.miou if metric == "miou" else self.pixel_acc
        return float(matrix[self.index(train), self.index(test)])

    def to_csv(self) -> str:
        """
        Two blocks of rows (train type) by columns (test type): mIoU with full
        precision, then pixel accuracy as an exact decimal percent.
        """
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["block", "train", *(t.value for t in self.types)])
        for i, row_type in enumerate(self.types):
            writer.writerow(["miou", row_type.value, *(repr(float(v)) for v in self.miou[i])])
        for i, row_type in enumerate(self.types):
            writer.writerow(["pixel_acc_percent", row_type.value,
                             *(_percent_text(v) for v in self.pixel_acc[i])])
        return buffer.getvalue()

    @classmethod
    def from_csv(cls, text: str, n_test: int = 0, seg_config: Optional[Dict] = None) -> "MatrixReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        types = [ImageType(value) for value in header[2:]]
        size = len(types)
        miou = np.zeros((size, size))
        pixel_acc = np.zeros((size, size))
        for record in reader:
            if not record:
                continue
            block, row = record[0], types.index(ImageType(record[1]))
            if block == "miou":
                miou[row] = [float(cell) for cell in record[2:]]
            elif block == "pixel_acc_percent":
                pixel_acc[row] = [_fraction_of(cell) for cell in record[2:]]
            else:
                raise ValueError(f"Unknown block {block!r} in matrix report")
        return cls(types, miou, pixel_acc, n_test, seg_config or {})

    def format_table(self, metric: str = "miou") -> str:
        """Aligned table; pixel accuracy is shown in percent."""
        matrix = self.miou if metric == "miou" else 100.0 * self.pixel_acc
        names = [t.value for t in self.types]
        width = max(len(n) for n in names + ["train\\test"]) + 2
        lines = ["train\\test".ljust(width) + "".join(n.rjust(width) for n in names)]
        for name, row in zip(names, matrix):
            lines.append(name.ljust(width) + "".join(f"{v:.4f}".rjust(width) for v in row))
        return "\n".join(lines)


def train_seg(dataset: ImageDataset, cfg: SegConfig, seed: Optional[int] = None,
              show_progress: bool = False) -> nn.Module:
    """
    Train a segmentation network with per-pixel cross-entropy.

    Args:
        dataset: Images with labels
        cfg: Architecture and training budget
        seed: Seed for initialization and batch order; ``cfg.seed`` when None
        show_progress: Show a tqdm bar

    Returns:
        The trained network (``cfg.steps == 0`` returns the initialized one)

    Raises:
        DatasetError: if labels are missing or exceed ``cfg.num_classes``
        NonFiniteLossError: if the loss becomes NaN or infinite
    """
    if dataset.labels is None:
        raise DatasetError("Segmentation training requires labels")
    if dataset.labels.data.max() >= cfg.num_classes:
        raise DatasetError(
            f"Label value {dataset.labels.data.max()} exceeds seg.num_classes={cfg.num_classes}"
        )
    seed = cfg.seed if seed is None else seed
    net = init_params(NetKind.SEGMENTATION, seed, arch=cfg.arch,
                      num_classes=cfg.num_classes, base_channels=cfg.base_channels)
    if cfg.optimizer == "sgd":
        optimizer = torch.optim.SGD(net.parameters(), lr=cfg.lr)
    else:
        optimizer = torch.optim.Adam(net.parameters(), lr=cfg.lr)

    batch_size = min(cfg.batch_size, len(dataset))
    batches = batch_iter((dataset.images.to_tensor(), dataset.labels.to_tensor()), batch_size, seed)
    net.train()
    for step in tqdm(range(cfg.steps), desc="segmentation", disable=not show_progress, leave=False):
        images, labels = next(batches)
        loss = F.cross_entropy(seg_forward(net, images), labels)
        if not torch.isfinite(loss.detach()):
            raise NonFiniteLossError("segmentation", step, float(loss.detach()))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    return net.eval()


@torch.no_grad()
def predict_labels(net: nn.Module, images: ImageBatch, chunk_size: int = 16) -> LabelMap:
    """Argmax class predictions as a LabelMap."""
    tensor = images.to_tensor()
    predictions = [seg_forward(net, tensor[start:start + chunk_size]).argmax(dim=1)
                   for start in range(0, tensor.shape[0], chunk_size)]
    return LabelMap(torch.cat(predictions).numpy(), net.num_classes)


def eval_seg(net: nn.Module, dataset: ImageDataset) -> Tuple[float, float]:
    """
    Score a network on a labeled set.

    Pixel counts are pooled over the whole set before the per-class IoU is
    taken, so the result does not depend on batch order.

    Returns:
        (mIoU, pixel accuracy), both fractions
    """
    if dataset.labels is None:
        raise DatasetError("Segmentation evaluation requires labels")
    predictions = predict_labels(net, dataset.images)
    gt = LabelMap(dataset.labels.data, predictions.num_classes)
    counts = confusion_matrix(predictions, gt)
    per_class = class_iou(predictions, gt)
    logger.debug("Per-class IoU: %s", np.array2string(per_class, precision=4))
    return float(np.nanmean(per_class)), float(np.trace(counts) / counts.sum())


def split_indices(size: int, test_size: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Disjoint seeded train/test split.

    The test part holds ``min(test_size, size // 2)`` items so both parts are non-empty.
    """
    if size < 2:
        raise DatasetError(f"At least 2 images are needed to split, got {size}")
    count = min(test_size, size // 2)
    if count < test_size:
        logger.warning("Test split reduced from %d to %d images (dataset has %d)", test_size, count, size)
    order = np.random.default_rng(seed).permutation(size)
    return np.sort(order[count:]), np.sort(order[:count])


def save_masks(labels: LabelMap, names: Sequence[str], directory: Union[str, Path]):
    """Write label maps as indexed-palette PNGs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    palette = np.rint(class_palette(labels.num_classes) * 255).astype(np.uint8).ravel().tolist()
    for index, name in enumerate(names):
        image = Image.fromarray(labels.data[index].astype(np.uint8))
        image.putpalette(palette)
        image.save(directory / f"{name}.png", format="PNG")


def check_diagonal_dominance(report: MatrixReport, metric: str = "miou") -> List[str]:
    """
    Diagonal entries that are not the maximum of their row and column.

    Failures are logged as warnings and returned; they never raise.
    """
    matrix = report.miou if metric == "miou" else report.pixel_acc
    violations = []
    for i, image_type in enumerate(report.types):
        if matrix[i, i] < matrix[i].max():
            violations.append(f"row {image_type.value}")
        if matrix[i, i] < matrix[:, i].max():
            violations.append(f"column {image_type.value}")
    for violation in violations:
        logger.warning("Diagonal dominance (%s) fails for %s", metric, violation)
    return violations


def _check_datasets(datasets: Mapping[ImageType, ImageDataset]):
    for required in (ImageType.SYNTHETIC, ImageType.REAL):
        if required not in datasets:
            raise DatasetError(f"The segmentation matrix needs a {required.value} dataset")
    for image_type, dataset in datasets.items():
        if dataset.labels is None:
            raise DatasetError(f"The {image_type.value} dataset has no labels")
    synthetic = datasets[ImageType.SYNTHETIC]
    for image_type in (ImageType.SIMGAN, ImageType.REFINED):
        derived = datasets.get(image_type)
        if derived is not None and not np.array_equal(derived.labels.data, synthetic.labels.data):
            raise DatasetError(
                f"The {image_type.value} labels must be identical to the synthetic labels"
            )


def run_matrix(datasets: Mapping[Union[ImageType, str], ImageDataset], cfg: SegConfig,
               output_dir: Optional[Union[str, Path]] = None,
               show_progress: bool = False) -> MatrixReport:
    """
    Train on each image type and test on every type.

    Args:
        datasets: Labeled datasets keyed by image type; synthetic and real are
            required, refined and simgan are optional
        cfg: Segmentation configuration shared by every row
        output_dir: If given, receives ``matrix_report.csv``, ``splits.json`` and
            prediction masks under ``masks/<train>_on_<test>/``
        show_progress: Show tqdm bars while training

    Returns:
        MatrixReport over the available types in canonical order
    """
    datasets = {ImageType(key): value for key, value in datasets.items()}
    _check_datasets(datasets)
    types = [t for t in ImageType.ordered() if t in datasets]
    if ImageType.REFINED not in datasets:
        logger.warning("No refined dataset supplied; the matrix covers %s only",
                       ", ".join(t.value for t in types))

    synthetic = datasets[ImageType.SYNTHETIC]
    synthetic_split = split_indices(len(synthetic), cfg.test_size, derive_seed(cfg.seed, "split"))
    # A real scene named like a synthetic one shares its layout and stays on the same side
    real_aligned = datasets[ImageType.REAL].names == synthetic.names
    if real_aligned:
        real_split = synthetic_split
    else:
        real_split = split_indices(len(datasets[ImageType.REAL]), cfg.test_size,
                                   derive_seed(cfg.seed, "split.real"))
    logger.info("Real split %s",
                "shared with the synthetic split" if real_aligned else "drawn independently")
    splits = {}
    for image_type in types:
        if image_type in SYNTHETIC_DERIVED and len(datasets[image_type]) != len(synthetic):
            raise DatasetError(f"The {image_type.value} dataset must align with the synthetic dataset")
        train_index, test_index = real_split if image_type is ImageType.REAL else synthetic_split
        dataset = datasets[image_type]
        splits[image_type] = (dataset.subset(train_index), dataset.subset(test_index))
        logger.info("%s split: %d train, %d test", image_type.value, len(train_index), len(test_index))

    size = len(types)
    miou_matrix = np.zeros((size, size))
    pixel_matrix = np.zeros((size, size))
    for i, train_type in enumerate(types):
        logger.info("Training segmentation on %s", train_type.value)
        net = train_seg(splits[train_type][0], cfg, seed=derive_seed(cfg.seed, f"seg.{train_type.value}"),
                        show_progress=show_progress)
        for j, test_type in enumerate(types):
            test_set = splits[test_type][1]
            miou_matrix[i, j], pixel_matrix[i, j] = eval_seg(net, test_set)
            logger.info("train %s / test %s: mIoU %.4f, pixel accuracy %.2f%%", train_type.value,
                        test_type.value, miou_matrix[i, j], 100.0 * pixel_matrix[i, j])
            if output_dir is not None and cfg.mask_samples:
                samples = test_set.subset(range(min(cfg.mask_samples, len(test_set))))
                save_masks(predict_labels(net, samples.images), samples.names,
                           Path(output_dir) / MASKS_DIR / f"{train_type.value}_on_{test_type.value}")

    report = MatrixReport(types, miou_matrix, pixel_matrix,
                          n_test=len(synthetic_split[1]), seg_config=asdict(cfg))
    check_diagonal_dominance(report)
    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        (output_dir / MATRIX_CSV_NAME).write_text(report.to_csv(), encoding="utf-8")
        manifest = {t.value: {"train": splits[t][0].names, "test": splits[t][1].names} for t in types}
        manifest["real_split"] = "synthetic" if real_aligned else "independent"
        (output_dir / SPLITS_NAME).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return report

"""
Metric results keyed by (row, column), e.g. (image type, "real").
"""
import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from ..core.types import ImageBatch
from ..losses.features import FeatureMapExtractor
from .fid import fid
from .ssim import dataset_ssim

logger = logging.getLogger(__name__)

METRIC_NAMES = ("fid", "ssim", "miou", "pixel_acc")


@dataclass
class MetricReport:
    """FID, SSIM, mIoU and pixel-accuracy values per (row, column) key."""
    entries: Dict[Tuple[str, str], Dict[str, float]] = field(default_factory=dict)

    def add(self, row: str, col: str, **values: float):
        for name in values:
            if name not in METRIC_NAMES:
                raise ValueError(f"Unknown metric {name!r}")
        self.entries.setdefault((row, col), {}).update(values)

    def get(self, row: str, col: str, metric: str) -> Optional[float]:
        return self.entries.get((row, col), {}).get(metric)

    def keys(self) -> List[Tuple[str, str]]:
        return list(self.entries)

    def metrics(self) -> List[str]:
        present = {name for values in self.entries.values() for name in values}
        return [name for name in METRIC_NAMES if name in present]

    def to_csv(self) -> str:
        """CSV with columns row, col and one column per present metric."""
        metrics = self.metrics()
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["row", "col", *metrics])
        for (row, col), values in self.entries.items():
            writer.writerow([row, col, *(repr(values[m]) if m in values else "" for m in metrics)])
        return buffer.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        report = cls()
        for record in reader:
            values = {name: float(cell) for name, cell in zip(header[2:], record[2:]) if cell != ""}
            report.add(record[0], record[1], **values)
        return report

    def format_table(self) -> str:
        """Aligned plain-text table for the terminal."""
        metrics = self.metrics()
        rows = [["train/set", "test/against", *metrics]]
        for (row, col), values in self.entries.items():
            rows.append([row, col, *(f"{values[m]:.4f}" if m in values else "-" for m in metrics)])
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)) for r in rows)


def evaluate_against_real(arms: Mapping[str, ImageBatch], real: ImageBatch,
                          extractor: FeatureMapExtractor, seed: int = 0,
                          limit: Optional[int] = None) -> MetricReport:
    """
    FID and SSIM of several image sets against the real set.

    Args:
        arms: Named image sets, e.g. synthetic, pretrain-only, refined, simgan
        real: Real images
        extractor: Feature extractor for FID
        seed: SSIM pairing seed
        limit: Maximum number of SSIM pairs

    Returns:
        MetricReport with one ``(arm, "real")`` entry per arm
    """
    report = MetricReport()
    for name, images in arms.items():
        value_fid = fid(images, real, extractor)
        value_ssim = dataset_ssim(images, real, seed=seed, limit=limit)
        report.add(name, "real", fid=value_fid, ssim=value_ssim)
        logger.info("%s vs real: FID %.4f, SSIM %.4f", name, value_fid, value_ssim)
    return report

"""CSV form of the per-step training log."""
import csv
import io
from pathlib import Path
from typing import List, Optional, Sequence, Union

from ..core.types import StepLog

LOSS_LOG_HEADER = ("step", "refiner_loss", "disc_loss_real", "disc_loss_refined", "ssim", "fid")


def _cell(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def format_loss_log(logs: Sequence[StepLog]) -> str:
    """Render logs as CSV; unevaluated metrics are empty cells."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(LOSS_LOG_HEADER)
    for log in logs:
        writer.writerow([
            log.step,
            _cell(log.refiner_loss),
            _cell(log.disc_loss_real),
            _cell(log.disc_loss_refined),
            _cell(log.ssim_vs_real),
            _cell(log.fid_vs_real),
        ])
    return buffer.getvalue()


def write_loss_log(logs: Sequence[StepLog], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_loss_log(logs), encoding="utf-8")
    return path


def read_loss_log(path: Union[str, Path]) -> List[StepLog]:
    """
    Parse a loss CSV written by ``write_loss_log``.

    Raises:
        ValueError: if the header does not match
    """
    reader = csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8")))
    header = tuple(next(reader, ()))
    if header != LOSS_LOG_HEADER:
        raise ValueError(f"{path}: unexpected loss log header {header}")
    logs = []
    for row in reader:
        if not row:
            continue
        step, refiner, real, refined, ssim, fid = row
        logs.append(StepLog(
            step=int(step),
            refiner_loss=float(refiner),
            disc_loss_real=float(real),
            disc_loss_refined=float(refined),
            ssim_vs_real=float(ssim) if ssim else None,
            fid_vs_real=float(fid) if fid else None,
        ))
    return logs

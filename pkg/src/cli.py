"""
Command-line interface for the refinement system.

Subcommands: make-toy, preprocess, train, refine, eval-fid, eval-ssim,
seg-matrix, select-ckpt. Every subcommand accepts ``--config`` and repeatable
``--override key=value`` options. Exit codes: 0 success, 1 internal error,
2 configuration or input error.
"""
import argparse
import json
import logging
import subprocess
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional

import torch

from .core.checkpoint import find_checkpoints
from .core.config import ExperimentConfig, config_hash, load_config
from .core.errors import (
    CheckpointFormatError,
    ConfigError,
    DatasetError,
    DimensionError,
    ExtractorError
)
from .data.toy import ToySceneSpec
from .segmentation.harness import MATRIX_CSV_NAME
from .sim2real import RefinementExperiment, make_toy_data
from .training.loss_log import read_loss_log
from .training.selection import select_best_checkpoint
from .training.trainer import LOSS_LOG_NAME

logger = logging.getLogger(__name__)

USER_ERRORS = (ConfigError, DatasetError, CheckpointFormatError, ExtractorError,
               DimensionError, FileNotFoundError)
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
RUN_LOG_NAME = "run.log"
MANIFEST_NAME = "run_manifest.json"
METRICS_NAME = "metrics.jsonl"


def configure_logging(verbose: bool = False):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format=LOG_FORMAT, force=True)


@contextmanager
def run_log(output_dir: Path):
    """Mirror all log records into ``<output_dir>/run.log`` while the block runs."""
    output_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(output_dir / RUN_LOG_NAME, encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    root.addHandler(handler)
    try:
        yield
    finally:
        root.removeHandler(handler)
        handler.close()


def version_string() -> str:
    """``git describe`` of the source tree, or the package version outside a checkout."""
    from . import __version__

    try:
        result = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    described = result.stdout.strip()
    return described if result.returncode == 0 and described else __version__


def write_manifest(output_dir: Path, command: str, config: ExperimentConfig) -> Path:
    """Record the effective config, seed and version of a run."""
    manifest = {
        "command": command,
        "version": version_string(),
        "seed": config.train.seed,
        "config_hash": config_hash(config.train),
        "config": config.to_dict(),
    }
    path = output_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _config(args, extra: Optional[List[str]] = None) -> ExperimentConfig:
    return load_config(args.config, [*(extra or []), *(args.override or [])])


def cmd_make_toy(args) -> int:
    spec = ToySceneSpec(num_images=args.num_images, height=args.height, width=args.width,
                        num_classes=args.num_classes, seed=args.seed)
    roots = make_toy_data(args.output_dir, spec)
    for name, root in roots.items():
        print(f"{name}: {root}")
    return 0


def cmd_preprocess(args) -> int:
    experiment = RefinementExperiment(_config(args))
    output = experiment.preprocess(args.input, args.output_dir)
    print(f"Preprocessed dataset written to {output}")
    return 0


def _data_overrides(args) -> List[str]:
    pairs = []
    for key in ("synthetic", "real", "refined", "simgan"):
        value = getattr(args, key, None)
        if value is not None:
            pairs.append(f"data.{key}_root={value}")
    return pairs


def cmd_train(args) -> int:
    config = _config(args, _data_overrides(args))
    output_dir = Path(args.output_dir)
    with run_log(output_dir):
        write_manifest(output_dir, "train", config)
        result = RefinementExperiment(config).train(output_dir)
    print(f"Final step: {result.final.step}")
    print(f"Best checkpoint: {result.best_checkpoint} (step {result.best_step})")
    print(f"Loss log: {result.loss_log_path}")
    return 0


def _size_configured(args) -> bool:
    """True when the image size comes from a config file or an explicit override."""
    keys = {item.split("=", 1)[0].strip() for item in (args.override or [])}
    return args.config is not None or bool(keys & {"image_height", "image_width"})


def cmd_refine(args) -> int:
    experiment = RefinementExperiment(_config(args))
    output = experiment.refine(args.checkpoint, args.dataset, args.output_dir,
                               check_config=_size_configured(args))
    print(f"Refined dataset written to {output}")
    return 0


def _cmd_eval(args, kind: str) -> int:
    overrides = [] if args.backend is None else [f"feature_backend={args.backend}"]
    config = _config(args, overrides)
    value = RefinementExperiment(config).evaluate(kind, args.set_a, args.set_b)
    print(f"{kind} = {value:.4f}")
    output_dir = Path(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "kind": kind,
        "value": value,
        "set_a": str(args.set_a),
        "set_b": str(args.set_b),
        "backend": config.train.feature_backend,
        "seed": config.train.seed,
    }
    with open(output_dir / METRICS_NAME, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


def cmd_eval_fid(args) -> int:
    return _cmd_eval(args, "fid")


def cmd_eval_ssim(args) -> int:
    return _cmd_eval(args, "ssim")


def cmd_seg_matrix(args) -> int:
    config = _config(args, _data_overrides(args))
    output_dir = Path(args.output_dir)
    with run_log(output_dir):
        write_manifest(output_dir, "seg-matrix", config)
        experiment = RefinementExperiment(config)
        refined_root = None
        if args.checkpoint is not None and config.data.refined_root is None:
            refined_root = experiment.refine(args.checkpoint, experiment.required_root("synthetic_root"),
                                             output_dir / "refined", check_config=_size_configured(args))
        report = experiment.seg_matrix(output_dir, refined_root=refined_root)
    print("mIoU")
    print(report.format_table("miou"))
    print("Pixel accuracy (%)")
    print(report.format_table("pixel_acc"))
    print(f"Report: {output_dir / MATRIX_CSV_NAME}")
    return 0


def cmd_select_ckpt(args) -> int:
    run_dir = Path(args.run_dir)
    loss_log = run_dir / LOSS_LOG_NAME
    if not loss_log.is_file():
        raise FileNotFoundError(f"Loss log not found: {loss_log}")
    if args.smooth_window < 1 or args.smooth_window % 2 == 0:
        raise ConfigError(f"--smooth-window must be a positive odd number, got {args.smooth_window}")
    logs = read_loss_log(loss_log)
    checkpoints = find_checkpoints(run_dir)
    candidates = [i for i, log in enumerate(logs) if log.step in checkpoints]
    if not candidates:
        raise DatasetError(f"No checkpoint in {run_dir} matches a logged step")
    best = logs[select_best_checkpoint(logs, args.smooth_window, candidates)]
    print(f"best_step = {best.step}")
    print(f"checkpoint = {checkpoints[best.step]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="Config file (key = value lines)")
    common.add_argument("-o", "--override", action="append", metavar="KEY=VALUE",
                        help="Config override, repeatable; dotted keys for seg.* and data.*")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(
        description="Synthetic-to-real image refinement - Command Line Interface",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    toy_parser = subparsers.add_parser("make-toy", parents=[common], help="Write a toy synthetic/real dataset pair")
    toy_parser.add_argument("output_dir", help="Destination directory")
    toy_parser.add_argument("--num-images", type=int, default=32)
    toy_parser.add_argument("--height", type=int, default=32)
    toy_parser.add_argument("--width", type=int, default=64)
    toy_parser.add_argument("--num-classes", type=int, default=4)
    toy_parser.add_argument("--seed", type=int, default=7)
    toy_parser.set_defaults(func=cmd_make_toy)

    pre_parser = subparsers.add_parser("preprocess", parents=[common], help="Crop and resize a raw dataset")
    pre_parser.add_argument("input", help="Raw dataset root (images/ and optional labels/)")
    pre_parser.add_argument("output_dir", help="Destination dataset root")
    pre_parser.set_defaults(func=cmd_preprocess)

    train_parser = subparsers.add_parser("train", parents=[common], help="Train a refiner")
    train_parser.add_argument("--output-dir", required=True, help="Run directory")
    train_parser.add_argument("--synthetic", help="Synthetic dataset root (overrides data.synthetic_root)")
    train_parser.add_argument("--real", help="Real dataset root (overrides data.real_root)")
    train_parser.set_defaults(func=cmd_train)

    refine_parser = subparsers.add_parser("refine", parents=[common], help="Refine a dataset with a checkpoint")
    refine_parser.add_argument("checkpoint", help="Checkpoint file")
    refine_parser.add_argument("dataset", help="Dataset root to refine")
    refine_parser.add_argument("output_dir", help="Destination dataset root")
    refine_parser.set_defaults(func=cmd_refine)

    for name, func, help_text in (("eval-fid", cmd_eval_fid, "FID between two datasets"),
                                  ("eval-ssim", cmd_eval_ssim, "SSIM between two datasets")):
        eval_parser = subparsers.add_parser(name, parents=[common], help=help_text)
        eval_parser.add_argument("set_a", help="First dataset root")
        eval_parser.add_argument("set_b", help="Second dataset root")
        eval_parser.add_argument("--backend", choices=("pretrained_inception", "toy_deterministic", "identity"),
                                 help="Feature backend (overrides feature_backend)")
        eval_parser.add_argument("--output-dir", default=".", help="Directory of metrics.jsonl")
        eval_parser.set_defaults(func=func)

    seg_parser = subparsers.add_parser("seg-matrix", parents=[common], help="Segmentation train/test matrix")
    seg_parser.add_argument("--output-dir", required=True, help="Report directory")
    seg_parser.add_argument("--synthetic", help="Synthetic dataset root")
    seg_parser.add_argument("--real", help="Real dataset root")
    seg_parser.add_argument("--refined", help="Refined dataset root")
    seg_parser.add_argument("--simgan", help="Dataset refined by the self-regularization-only recipe")
    seg_parser.add_argument("--checkpoint", help="Refine the synthetic set with this checkpoint first")
    seg_parser.set_defaults(func=cmd_seg_matrix)

    select_parser = subparsers.add_parser("select-ckpt", parents=[common], help="Pick the best checkpoint of a run")
    select_parser.add_argument("run_dir", help="Run directory with loss_log.csv and checkpoints")
    select_parser.add_argument("--smooth-window", type=int, default=5)
    select_parser.set_defaults(func=cmd_select_ckpt)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2

    configure_logging(args.verbose)
    torch.use_deterministic_algorithms(True, warn_only=True)
    try:
        return args.func(args)
    except USER_ERRORS as e:
        logger.debug("User error", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.debug("Internal error", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return 1

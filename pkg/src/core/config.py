"""
Configuration records and the ``key = value`` config file format.

Undotted keys address ``TrainConfig`` fields, ``seg.<field>`` addresses
``SegConfig`` and ``data.<field>`` addresses ``DataConfig``.
"""
import hashlib
import json
import typing
from dataclasses import dataclass, asdict, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from .errors import ConfigError

OPTIMIZERS = ("sgd", "adam")
FEATURE_BACKENDS = ("pretrained_inception", "toy_deterministic", "identity")
SECTIONS = ("seg", "data")


@dataclass(frozen=True)
class TrainConfig:
    """Every hyperparameter of the refiner training recipe."""
    alpha: float = 50.0
    beta: float = 4e-6
    refiner_lr: float = 1e-4
    disc_lr: float = 1e-3
    refiner_pretrain_steps: int = 1200
    disc_pretrain_steps: int = 400
    full_train_steps: int = 5000
    refiner_updates_per_step: int = 2
    disc_updates_per_step: int = 1
    batch_size: int = 16
    history_capacity: int = 512
    history_fraction: float = 0.5
    seed: int = 0
    perceptual_layer: Optional[str] = None
    image_height: int = 80
    image_width: int = 160
    optimizer: str = "sgd"
    eval_every: int = 100
    ckpt_every: int = 100
    smooth_window: int = 5
    eval_fid: bool = False
    eval_images: int = 64
    skip_perceptual_pretrain: bool = False
    feature_backend: str = "toy_deterministic"
    inception_weights_path: Optional[str] = None
    allow_toy_fallback: bool = True
    refiner_channels: int = 64
    refiner_blocks: int = 5
    device: str = "cpu"
    show_progress: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        """
        Check every field against its allowed range.

        Raises:
            ConfigError: naming the first violated field
        """
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        if not self.beta >= 0:
            raise ConfigError("beta must be >= 0")
        if not self.refiner_lr > 0:
            raise ConfigError("refiner_lr must be > 0")
        if not self.disc_lr > 0:
            raise ConfigError("disc_lr must be > 0")
        for name in ("refiner_pretrain_steps", "disc_pretrain_steps", "full_train_steps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("refiner_updates_per_step", "disc_updates_per_step", "batch_size",
                     "eval_every", "ckpt_every", "smooth_window", "refiner_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.smooth_window % 2 == 0:
            raise ConfigError("smooth_window must be odd")
        if self.history_capacity < 0:
            raise ConfigError("history_capacity must be >= 0")
        if not 0.0 <= self.history_fraction <= 1.0:
            raise ConfigError("history_fraction must be in [0, 1]")
        if self.image_height < 8 or self.image_width < 8:
            raise ConfigError("image_height and image_width must be >= 8")
        if self.refiner_blocks < 0:
            raise ConfigError("refiner_blocks must be >= 0")
        if self.eval_images < 2:
            raise ConfigError("eval_images must be >= 2")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.feature_backend not in FEATURE_BACKENDS:
            raise ConfigError(
                f"feature_backend must be one of {FEATURE_BACKENDS}, got {self.feature_backend!r}"
            )


@dataclass(frozen=True)
class SegConfig:
    """Training budget and architecture of the downstream segmentation network."""
    arch: str = "unet"
    steps: int = 500
    batch_size: int = 8
    lr: float = 1e-3
    optimizer: str = "adam"
    base_channels: int = 16
    num_classes: int = 19
    test_size: int = 200
    mask_samples: int = 4
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.steps < 0:
            raise ConfigError("seg.steps must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("seg.batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigError("seg.lr must be > 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"seg.optimizer must be one of {OPTIMIZERS}")
        if self.base_channels < 1:
            raise ConfigError("seg.base_channels must be >= 1")
        if self.num_classes < 2:
            raise ConfigError("seg.num_classes must be >= 2")
        if self.test_size < 1:
            raise ConfigError("seg.test_size must be >= 1")
        if self.mask_samples < 0:
            raise ConfigError("seg.mask_samples must be >= 0")


@dataclass(frozen=True)
class DataConfig:
    """Dataset locations and the crop applied when ``apply_crop`` is set."""
    synthetic_root: Optional[str] = None
    real_root: Optional[str] = None
    refined_root: Optional[str] = None
    simgan_root: Optional[str] = None
    crop_row: int = 200
    crop_col: int = 600
    crop_height: int = 400
    crop_width: int = 600
    apply_crop: bool = False
    strict: bool = False
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.crop_row < 0 or self.crop_col < 0:
            raise ConfigError("data.crop_row and data.crop_col must be >= 0")
        if self.crop_height < 1 or self.crop_width < 1:
            raise ConfigError("data.crop_height and data.crop_width must be >= 1")
        if self.workers < 1:
            raise ConfigError("data.workers must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    """The full effective configuration of one run."""
    train: TrainConfig = field(default_factory=TrainConfig)
    seg: SegConfig = field(default_factory=SegConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> Dict[str, Any]:
        return {"train": asdict(self.train), "seg": asdict(self.seg), "data": asdict(self.data)}

    def to_flat_dict(self) -> Dict[str, Any]:
        """Flatten to the dotted-key form used by config files."""
        flat = dict(asdict(self.train))
        for section in SECTIONS:
            for key, value in asdict(getattr(self, section)).items():
                flat[f"{section}.{key}"] = value
        return flat


def validate_config(cfg: TrainConfig) -> TrainConfig:
    """
    Validate a training config.

    Args:
        cfg: Config to check

    Returns:
        The same config object, unchanged

    Raises:
        ConfigError: naming the first violated field
    """
    cfg.validate()
    return cfg


def config_hash(cfg: TrainConfig) -> str:
    """Stable SHA-256 of a config's canonical JSON form."""
    payload = json.dumps(asdict(cfg), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def _coerce(raw: str, hint, key: str):
    """Convert a raw string value to the field's declared type."""
    text = raw.strip()
    if typing.get_origin(hint) is typing.Union:
        args = [a for a in hint.__args__ if a is not type(None)]
        if text.lower() in ("none", "null", ""):
            return None
        hint = args[0]
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1]
    try:
        if hint is bool:
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"Invalid value for {key}: {raw!r}") from None


def _section_and_field(key: str) -> Tuple[str, str]:
    if "." in key:
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"Unknown config section in key {key!r}")
        return section, name
    return "train", key


def apply_overrides(config: ExperimentConfig, pairs: Iterable[Tuple[str, str]]) -> ExperimentConfig:
    """
    Apply ``(key, raw_value)`` pairs to a config, last assignment winning.

    Args:
        config: Base configuration
        pairs: Dotted keys with unparsed string values

    Returns:
        A new, validated ExperimentConfig

    Raises:
        ConfigError: for unknown keys or invalid values
    """
    updates: Dict[str, Dict[str, Any]] = {"train": {}, "seg": {}, "data": {}}
    for key, raw in pairs:
        key = key.strip()
        section, name = _section_and_field(key)
        target = getattr(config, section)
        hints = typing.get_type_hints(type(target))
        if name not in {f.name for f in fields(target)}:
            raise ConfigError(f"Unknown config key {key!r}")
        updates[section][name] = _coerce(raw, hints[name], key)
    return ExperimentConfig(
        train=replace(config.train, **updates["train"]),
        seg=replace(config.seg, **updates["seg"]),
        data=replace(config.data, **updates["data"]),
    )


def parse_override(text: str) -> Tuple[str, str]:
    """Split a ``key=value`` override string."""
    if "=" not in text:
        raise ConfigError(f"Override must look like key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def parse_config_text(text: str) -> List[Tuple[str, str]]:
    """
    Parse ``key = value`` lines, ignoring blank lines and ``#`` comments.

    Returns:
        List of (key, raw_value) pairs in file order
    """
    pairs = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"Line {line_number}: expected 'key = value', got {line.strip()!r}")
        key, value = stripped.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path: Optional[str] = None,
                overrides: Optional[Iterable[str]] = None) -> ExperimentConfig:
    """
    Load a config file and apply command-line overrides.

    Args:
        path: Config file path, None for defaults only
        overrides: ``key=value`` strings applied after the file

    Returns:
        Validated ExperimentConfig
    """
    pairs: List[Tuple[str, str]] = []
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"Config file not found: {config_path}")
        pairs.extend(parse_config_text(config_path.read_text(encoding="utf-8")))
    pairs.extend(parse_override(item) for item in (overrides or []))
    return apply_overrides(ExperimentConfig(), pairs)


def format_config(config: ExperimentConfig) -> str:
    """Render a config back into the ``key = value`` file format."""
    lines = []
    for key, value in config.to_flat_dict().items():
        if value is None:
            value = "none"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"

"""Core types, configuration and checkpoint formats."""
from .errors import (
    Sim2RealError,
    ConfigError,
    DimensionError,
    DatasetError,
    CheckpointFormatError,
    ExtractorError,
    NonFiniteLossError
)
from .types import ImageBatch, LabelMap, StepLog, ImageType
from .config import (
    TrainConfig,
    SegConfig,
    DataConfig,
    ExperimentConfig,
    validate_config,
    config_hash,
    load_config,
    apply_overrides,
    parse_override,
    parse_config_text,
    format_config
)
from .checkpoint import (
    Checkpoint,
    save_checkpoint,
    load_checkpoint,
    checkpoint_path,
    find_checkpoints,
    nearest_checkpoint
)
from .seeding import derive_seed, seed_everything

__all__ = [
    "Sim2RealError",
    "ConfigError",
    "DimensionError",
    "DatasetError",
    "CheckpointFormatError",
    "ExtractorError",
    "NonFiniteLossError",
    "ImageBatch",
    "LabelMap",
    "StepLog",
    "ImageType",
    "TrainConfig",
    "SegConfig",
    "DataConfig",
    "ExperimentConfig",
    "validate_config",
    "config_hash",
    "load_config",
    "apply_overrides",
    "parse_override",
    "parse_config_text",
    "format_config",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_path",
    "find_checkpoints",
    "nearest_checkpoint",
    "derive_seed",
    "seed_everything"
]

"""
Exception types shared by the refinement system.

Validation failures derive from ``ValueError`` so callers that only know the
standard library still catch them; runtime failures derive from
``RuntimeError``.
"""


class Sim2RealError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(Sim2RealError, ValueError):
    """A configuration value or key is invalid."""


class DimensionError(Sim2RealError, ValueError):
    """An array or image has the wrong shape for the requested operation."""


class DatasetError(Sim2RealError, ValueError):
    """A dataset directory is missing, incomplete or undecodable."""


class CheckpointFormatError(Sim2RealError, ValueError):
    """A checkpoint file is truncated, corrupt or of an unsupported version."""


class ExtractorError(Sim2RealError, RuntimeError):
    """A feature extractor could not be built or evaluated."""


class NonFiniteLossError(Sim2RealError, RuntimeError):
    """A training loss became NaN or infinite."""

    def __init__(self, phase: str, step: int, value: float):
        self.phase = phase
        self.step = step
        self.value = value
        super().__init__(f"Non-finite {phase} loss ({value}) at step {step}")

"""
Exception hierarchy for marginclip.

The CLI maps ConfigError to exit code 2 and every other MarginClipError to
exit code 3.
"""


class MarginClipError(Exception):
    """Base class for all marginclip failures."""


class ConfigError(MarginClipError):
    """Invalid or inconsistent configuration value."""


class ShapeError(MarginClipError, ValueError):
    """Tensor or layer shapes do not line up."""


class BoundsError(MarginClipError, ValueError):
    """Clip bounds do not conform to the network they are applied to."""


class NonFiniteError(MarginClipError, ValueError):
    """NaN or Inf where a finite value is required."""


class EmptyDatasetError(MarginClipError, ValueError):
    """An operation needs at least one sample and got none."""


class NoEligibleSamplesError(MarginClipError, ValueError):
    """The attack configuration leaves nothing to poison."""


class CalibrationError(MarginClipError, ValueError):
    """Not enough clean samples to fit the detection null."""


class TrainingDivergedError(MarginClipError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class ArtifactMissingError(MarginClipError, FileNotFoundError):
    """A required artifact file does not exist."""


class ArtifactFormatError(MarginClipError, ValueError):
    """A binary artifact is truncated or has the wrong magic/version."""


class StageError(MarginClipError):
    """A pipeline stage failed; wraps the underlying cause."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")

"""Exception hierarchy for the spleen length toolkit.

Every error raised on purpose by the package derives from :class:`SpleenLenError`, so
callers (the command-line interface in particular) can separate expected failures from
programming errors.
"""

from typing import Optional


class SpleenLenError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(SpleenLenError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class ShapeError(SpleenLenError, ValueError):
    """Incompatible tensor, image or mask shapes."""


class GraphError(SpleenLenError, RuntimeError):
    """Invalid use of the autodiff graph, e.g. a non-scalar loss or a cycle."""


class NonFiniteError(SpleenLenError, FloatingPointError):
    """NaN or Inf found in activations or gradients."""


class TrainingDivergedError(SpleenLenError, RuntimeError):
    """Training loss became non-finite.

    Attributes:
        epoch (int): Zero-based epoch index at which the loss diverged.
    """

    def __init__(self, epoch: int, message: Optional[str] = None):
        self.epoch = epoch
        super().__init__(message or f"Training diverged at epoch {epoch}")


class GeometryError(SpleenLenError, ValueError):
    """Mask unsuitable for a geometric measurement."""


class NoSpleenFoundError(GeometryError):
    """The mask is empty after connected-component filtering."""


class MetricError(SpleenLenError, ValueError):
    """Metric undefined for the given inputs."""


class InpaintingError(SpleenLenError, RuntimeError):
    """Inpainting could not be performed or did not converge."""


class PhantomError(SpleenLenError, RuntimeError):
    """A phantom case could not be generated."""


class DatasetError(SpleenLenError, ValueError):
    """Dataset directory is missing files or is inconsistent.

    Attributes:
        case_id (Optional[int]): Case the error refers to, when known.
    """

    def __init__(self, message: str, case_id: Optional[int] = None):
        self.case_id = case_id
        if case_id is not None:
            message = f"case {case_id}: {message}"
        super().__init__(message)


class FoldPlanError(SpleenLenError, ValueError):
    """Cross-validation folds cannot be built as requested."""


class LeakageError(SpleenLenError, RuntimeError):
    """A held-out case or patient reached a training call."""


class CheckpointError(SpleenLenError, ValueError):
    """Checkpoint file unreadable or incompatible with the model."""

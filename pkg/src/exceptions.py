"""Exception hierarchy for the line narrowing toolkit."""
from typing import Optional


class LineNarrowingError(Exception):
    """Base class for all errors raised by this package."""


class ParameterDomainError(LineNarrowingError, ValueError):
    """A parameter lies outside its admissible domain."""


class ShapeError(LineNarrowingError, ValueError):
    """Two vectors that must have equal length do not."""


class NumericError(LineNarrowingError):
    """A numerical stage could not produce a finite, well-posed result."""


class KernelUnderflowError(NumericError):
    """Kernel DFT magnitude vanished on a retained coefficient."""


class DegenerateSignalError(NumericError):
    """Input signal carries no information (e.g. identically zero)."""


class OrderError(NumericError, ValueError):
    """Requested autoregressive order is not supported by the data length."""


class TruncationError(NumericError, ValueError):
    """Truncation length is incompatible with the signal length."""


class NormalizationError(NumericError, ValueError):
    """Weights are not normalized or cannot be normalized."""


class ConditioningError(NumericError):
    """Covariance matrix could not be factorized even after jitter escalation."""


class ConvergenceError(NumericError):
    """An optimizer stopped before meeting its convergence criterion."""


class ConfigError(LineNarrowingError):
    """Run configuration is invalid."""


class IngestionError(LineNarrowingError):
    """Spectrum file could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class InsufficientReplicatesError(LineNarrowingError, ValueError):
    """Too few SBC replicates to build a report."""


class PipelineStageError(LineNarrowingError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")

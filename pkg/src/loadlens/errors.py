"""Exception types raised across the package.

Validation problems (bad input, bad config) subclass ``ValueError``;
failures that only show up while running (training blew up, model
not trained) subclass ``RuntimeError``. The CLI maps the two families
to different exit codes.
"""


class LoadLensError(Exception):
    """Base class for every error raised by loadlens."""


class ValidationError(LoadLensError, ValueError):
    pass


class RuntimeFailure(LoadLensError, RuntimeError):
    pass


class MissingColumn(ValidationError):
    pass


class NonUniformTimestamps(ValidationError):
    pass


class NonNumericCell(ValidationError):
    pass


class ZeroVariance(ValidationError):
    pass


class DatasetTooSmall(ValidationError):
    pass


class SeriesTooShort(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class ZeroVector(ValidationError):
    pass


class NotEnoughPeaks(ValidationError):
    pass


class EvenKernel(ValidationError):
    pass


class KernelTooLarge(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class KeyMismatch(ValidationError):
    pass


class NonPositiveSigma(ValidationError):
    pass


class MapeUndefined(ValidationError):
    pass


class EmptySplit(ValidationError):
    pass


class DivergedLoss(RuntimeFailure):
    pass


class NotTrained(RuntimeFailure):
    pass


class IoError(RuntimeFailure, OSError):
    """An artifact could not be read or written."""

"""Exception types shared across the package."""


class HsiaError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(HsiaError):
    """A declared contract was violated: bad config value, shape mismatch, invalid argument."""


class FormatError(HsiaError):
    """A binary artifact is malformed. Carries the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class GenerationError(HsiaError):
    """Scene synthesis could not satisfy its coverage contract."""


class SplitError(HsiaError):
    """A dataset split could not be performed (e.g. a class with a single sample)."""


class TrainingError(HsiaError):
    """Training produced a non-finite loss or was asked to run on unusable data."""


class NumericError(HsiaError):
    """A numeric quantity that must be finite was not (NaN/Inf gradients, degenerate marginals)."""

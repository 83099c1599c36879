"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`DrtEcmError`,
so callers (and the CLI) can separate domain failures from programming bugs.
"""


class DrtEcmError(Exception):
    """Base class for all package errors."""


class ParseError(DrtEcmError):
    """Malformed input text. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DrtEcmError):
    """Data violates a domain invariant."""


class InsufficientDataError(ValidationError):
    pass


class GridMismatchError(ValidationError):
    pass


class MetadataError(ValidationError):
    pass


class SchemaError(DrtEcmError):
    """Model file is missing a required field."""


class VersionError(SchemaError):
    pass


class ConfigurationError(DrtEcmError, ValueError):
    """Invalid numerical configuration (grid density, shape factor, ...)."""


class ConditioningError(DrtEcmError):
    """Linear system too ill-conditioned to solve meaningfully."""


class FitError(DrtEcmError):
    pass


class ConvergenceError(DrtEcmError):
    """Iterative solver hit its cap. ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class ValidityError(DrtEcmError):
    """Spectrum failed the Kramers-Kronig gate."""


class StructuralError(DrtEcmError):
    """Extracted peaks cannot be assembled into one model structure."""


class ExtrapolationError(DrtEcmError):
    """Requested temperature lies outside the characterized range."""


class RangeError(DrtEcmError, ValueError):
    pass


class AlignmentError(DrtEcmError):
    pass


class IterationCapError(DrtEcmError):
    pass


class PipelineError(DrtEcmError):
    """Stages invoked out of order."""


class DrtEcmWarning(UserWarning):
    """Recoverable numerical condition worth surfacing (fallbacks, caps, flags)."""

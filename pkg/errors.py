"""
Exception hierarchy for the MMN toolkit.

Every error raised on purpose by this repository derives from MMNError,
which itself is a ValueError so existing `except ValueError` handlers keep
catching it.
"""

from typing import Optional


class MMNError(ValueError):
    """Base class for all MMN errors."""


class DimensionError(MMNError):
    """Raised when tensor shapes are incompatible for an operation."""


class ConfigurationError(MMNError):
    """Raised when a configuration value violates its contract."""


class DataError(MMNError):
    """Raised when input data (labels, samples, predictions) is invalid."""


class SchemaError(DataError):
    """Raised when a dataset file is internally inconsistent."""


class ParseError(DataError):
    """Raised when a record cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        """
        Initialize the parse error.

        Args:
            message: Description of the problem
            line: 1-based line number of the offending record, if known
        """
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedGeometryError(MMNError):
    """Raised when an augmentation is asked to handle a non-2-D skeleton."""


class NonFiniteError(MMNError):
    """Raised when a NaN or Inf shows up where finite values are required."""

    def __init__(self, message: str, source: Optional[str] = None):
        """
        Initialize the non-finite error.

        Args:
            message: Description of the problem
            source: Name of the op or parameter path that produced the value
        """
        self.source = source
        super().__init__(message)


class UsageError(MMNError):
    """Raised by the command-line layer for missing or conflicting flags."""

"""
Exception types raised across the package.

The CLI maps them to exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""
from __future__ import annotations


class UgmmError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(UgmmError, ValueError):
    """Operand shapes do not chain."""


class FullyDroppedError(UgmmError, ValueError):
    """A logsumexp reduction had no unmasked entry (every component dropped)."""


class ConfigError(UgmmError, ValueError):
    """Invalid run configuration or network specification."""


class DataError(UgmmError, ValueError):
    """Malformed, truncated or inconsistent dataset."""


class CheckpointError(DataError):
    """Checkpoint cannot be read or does not match its embedded spec."""


class NumericalError(UgmmError, ArithmeticError):
    """Training produced a non-finite loss."""

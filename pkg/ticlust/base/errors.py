"""Exceptions and warnings raised across ticlust."""

from typing import Optional


class TicError(Exception):
    """Base class for every ticlust failure."""


class DataError(TicError, ValueError):
    """Invalid input data: malformed files, violated invariants, impossible shapes."""

    def __init__(self, message: str, line: Optional[int] = None, row: Optional[int] = None):
        self.line = line
        self.row = row
        if line is not None:
            message = f"line {line}: {message}"
        elif row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(TicError, ValueError):
    """Invalid hyperparameters, run configuration or synthetic spec."""


class ScoringError(DataError):
    """Reference and hypothesis timelines cannot be scored against each other."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped at its iteration cap."""

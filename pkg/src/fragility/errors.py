"""Exception types shared across the package."""

from __future__ import annotations


class FragilityError(Exception):
    """Base class for every error this package raises on purpose."""


class InvalidParameterError(FragilityError, ValueError):
    """An argument is outside its documented domain."""


class SingularDesignError(FragilityError):
    """Design matrix is rank deficient; the model cannot be fit."""


class UnconvergedFitError(FragilityError):
    """A downstream quantity was requested from a fit that did not converge."""


class DataError(FragilityError):
    """Problem with user-supplied data."""


class ParseError(DataError):
    """A cell could not be parsed; carries the 1-based data row number."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class SchemaError(DataError):
    """The file does not contain the declared columns."""


class DiagnosticError(FragilityError):
    """A stochastic search failed its self-check; carries diagnostics."""

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory

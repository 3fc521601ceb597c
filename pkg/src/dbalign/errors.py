"""Exceptions raised by the dbalign library."""
from __future__ import annotations
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from typing import Optional


class DBAlignError(Exception):
    """
    Base class for all errors raised by dbalign.
    """


class ParameterError(DBAlignError, ValueError):
    """
    A parameter is outside the range an operation accepts.
    """


class OracleLimitError(ParameterError):
    """
    A brute-force oracle was asked for a configuration larger than it enumerates.
    """


class DegenerateInputError(DBAlignError):
    """
    The input databases cannot be normalized, e.g. because a row has zero norm.
    """


class NumericalError(DBAlignError):
    """
    A numerical routine did not reach the requested tolerance.

    Attributes:
        achieved (Optional[float]): The error estimate that was reached, if known.
    """
    def __init__(self, message: str, achieved: Optional[float] = None) -> None:
        super().__init__(message)
        self.achieved: Optional[float] = achieved


class UndefinedThresholdError(NumericalError):
    """
    The detection threshold beta*n*P is zero because the local detect probability vanished.
    """


class DataFormatError(DBAlignError):
    """
    A database, truth or alignment file could not be parsed.

    Attributes:
        path (str): The file that failed to parse.
        line (Optional[int]): 1-based line number of the offending row.
    """
    def __init__(self, message: str, path: str, line: Optional[int] = None) -> None:
        location: str = f'{path}:{line}' if line is not None else path
        super().__init__(f'{location}: {message}')
        self.path: str = path
        self.line: Optional[int] = line

"""Exception hierarchy shared by all estimators."""

from __future__ import annotations


class WPCError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(WPCError, ValueError):
    """Inputs are not conformable or a count is out of range."""


class NumericalError(WPCError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy result."""

    def __init__(self, message: str, *, iterations: int | None = None) -> None:
        super().__init__(message)
        self.iterations = iterations


class DefinitenessError(NumericalError):
    """A matrix that must be positive definite is not.

    ``pivot`` is the zero-based index of the first failing Cholesky pivot
    when known.
    """

    def __init__(self, message: str, *, pivot: int | None = None) -> None:
        super().__init__(message)
        self.pivot = pivot


class RankError(NumericalError):
    """A design or loading matrix is rank deficient."""


class BandwidthError(WPCError, ValueError):
    """HAC bandwidth is not smaller than the sample length."""


class DegenerateSeriesError(NumericalError):
    """A series has zero residual variance, so it cannot be reweighted."""

    def __init__(self, message: str, *, series: int) -> None:
        super().__init__(message)
        self.series = series


class ParseError(WPCError, ValueError):
    """Malformed input file. ``row``/``column`` are one-based when set."""

    def __init__(self, message: str, *, row: int | None = None, column: int | None = None) -> None:
        super().__init__(message)
        self.row = row
        self.column = column

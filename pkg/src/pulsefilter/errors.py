"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`ParseError` -> 1,
:class:`ValidationError` -> 2, :class:`NumericalError` and
:class:`ResourceLimitError` -> 3.
"""

__all__ = [
    "PulseFilterError",
    "ParseError",
    "ValidationError",
    "ShapeError",
    "HermiticityError",
    "DurationError",
    "TracelessError",
    "BasisMismatchError",
    "GridMismatchError",
    "NumericalError",
    "ResourceLimitError",
]


class PulseFilterError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PulseFilterError):
    """Malformed input file.

    ``line`` and ``column`` are set when the position is known.
    """

    def __init__(self, message, *, line=None, column=None, path=None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.path = path


class ValidationError(PulseFilterError, ValueError):
    """Input is well-formed but violates a precondition."""


class ShapeError(ValidationError):
    """Array shapes are inconsistent."""


class HermiticityError(ValidationError):
    """An operator that must be Hermitian is not."""


class DurationError(ValidationError):
    """A segment duration is not strictly positive."""


class TracelessError(ValidationError):
    """A noise operator has nonzero trace."""


class BasisMismatchError(ValidationError):
    """Objects defined with respect to different operator bases were combined."""


class GridMismatchError(ValidationError):
    """Frequency grids or source labels do not match."""


class NumericalError(PulseFilterError, ArithmeticError):
    """A numerical routine failed or produced non-finite output."""


class ResourceLimitError(PulseFilterError, MemoryError):
    """The requested object would exceed a configured size limit."""

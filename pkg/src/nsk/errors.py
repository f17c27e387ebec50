"""Exception hierarchy shared by all modules."""


class NSKError(Exception):
    """Base class for every error raised by the package."""


class PathError(NSKError, ValueError):
    """Invalid path or partition data."""


class IncompatiblePathsError(PathError):
    """Two paths that must share a dimension do not."""


class ParseError(PathError):
    """Tabular path input could not be parsed."""


class TooFewRowsError(ParseError):
    pass


class DuplicateTimestampError(ParseError):
    pass


class NonNumericFieldError(ParseError):
    pass


class InvalidPSDError(NSKError, ValueError):
    """A 2x2 matrix is not positive semidefinite within tolerance."""


class NumericalBreakdown(NSKError, ArithmeticError):
    """A solver or simulator produced an invalid state.

    ``location`` identifies where it happened (a step index, a grid
    cell ``(m, n)``, a layer index or a pair of path indices).
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class CapacityError(NSKError, ValueError):
    """A request exceeds the sizes supported by a desk-scale routine."""

"""Exception types raised by estimation and screening routines."""


class EstimationError(Exception):
    """Base class for recoverable estimation failures."""


class InsufficientSupport(EstimationError):
    """A conditional quantity has fewer matching rows than required.

    ``cells`` holds the offending assignments (each a tuple of
    (variable index, value) pairs), ``support`` the smallest count seen.
    """

    def __init__(self, message, cells=(), support=0):
        super().__init__(message)
        self.cells = tuple(cells)
        self.support = support


class ZeroCell(EstimationError):
    """A joint cell count is zero, so a probability ratio is undefined.

    Distinct from low support: the estimate cannot be formed at all and
    must never surface as an infinity or NaN.
    """

    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = tuple(cells)


class DegenerateMean(EstimationError):
    """A conditional mean is exactly 0 or 1, so an odds ratio is undefined."""

    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = tuple(cells)


class NoUsableStrata(EstimationError):
    """Every stratum failed the expected-count floor of the chi-squared test."""


class AllReplicatesFailed(EstimationError):
    """Every bootstrap replicate raised an estimation error."""


class ParseError(ValueError):
    """Malformed input file; carries the offending location when known."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column

"""Exception hierarchy shared by all relikit modules."""


class RelikitError(Exception):
    """Base class for every error raised by relikit."""


class InputError(RelikitError, ValueError):
    """Malformed or inconsistent input data."""


class MissingColumn(InputError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"required column {column!r} not found in header")


class NonBinaryOutcome(InputError):
    def __init__(self, row, value=None):
        self.row = row
        self.value = value
        super().__init__(f"outcome in data row {row} is not 0/1: {value!r}")


class DuplicateCell(InputError):
    def __init__(self, i, j, k):
        self.cell = (i, j, k)
        super().__init__(f"duplicate (subject, rater, time) cell {self.cell}")


class DimensionMismatch(InputError):
    pass


class UnequalRatingsPerItem(InputError):
    pass


class DegenerateAgreement(RelikitError, ArithmeticError):
    """Chance agreement equals one, so kappa is undefined."""


class NumericalError(RelikitError, ArithmeticError):
    """Base class for density/sampler failures (CLI exit code 2)."""


class NonFiniteDensity(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class AllDivergent(NumericalError):
    pass


class TooFewDraws(RelikitError, ValueError):
    pass

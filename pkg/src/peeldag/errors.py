"""Exception hierarchy shared across the package."""


class PeelDagError(Exception):
    """Base class for all package errors."""


class DataError(PeelDagError):
    """Bad input data (maps to CLI exit code 3)."""


class NumericalError(PeelDagError):
    """A numerical routine could not produce a result (CLI exit code 4)."""


class CyclicInput(PeelDagError):
    pass


class DimensionMismatch(DataError):
    pass


class ParseError(DataError):
    def __init__(self, path, line, column, message):
        self.path, self.line, self.column = path, line, column
        super().__init__(f"{path}: line {line}, column {column}: {message}")


class MissingValue(ParseError):
    pass


class RowMismatch(DataError):
    pass


class RankDeficient(NumericalError):
    pass


class NotNested(PeelDagError):
    pass


class MaxIterations(NumericalError):
    pass


class PeelStalled(NumericalError):
    """No instrument-leaf pair could be found while primary nodes remain.

    ``remaining`` holds the 0-based indices of the unpeeled columns and
    ``submatrix`` the thresholded reduced-form block restricted to them.
    """

    def __init__(self, message, remaining=(), submatrix=None):
        super().__init__(message)
        self.remaining = tuple(remaining)
        self.submatrix = submatrix


class DegreesOfFreedomExhausted(NumericalError):
    pass


class NoContainedReplicates(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BudgetExceedsPredictors(UserWarning):
    """Sparsity budget larger than the candidate predictor set; clamped."""


class IoError(DataError):
    """A result file could not be written or read back."""

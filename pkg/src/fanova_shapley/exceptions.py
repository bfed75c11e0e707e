"""Exception hierarchy. CLI exit codes are keyed off these classes."""


class FanovaError(Exception):
    pass


class InvalidInputError(FanovaError, ValueError):
    pass


class DataError(FanovaError):
    """Problems with input files or model archives (CLI exit code 2)."""


class IngestionError(DataError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ModelFormatError(DataError):
    pass


class NumericalError(FanovaError):
    """Numerical failures (CLI exit code 3)."""


class DegenerateKernelError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    pass


class OptimizationFailedError(NumericalError):
    pass


class ExplanationDegenerateError(NumericalError):
    pass


class OracleTooLargeError(FanovaError, ValueError):
    pass


class QuadratureFailedError(NumericalError):
    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error

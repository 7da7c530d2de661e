"""Exception hierarchy shared across the package."""


class StmraError(Exception):
    """Base class for all package errors."""


class DataError(StmraError, ValueError):
    """Invalid input data (maps to CLI exit code 2)."""


class DegenerateDesignError(DataError):
    pass


class DomainError(DataError):
    pass


class EmptyDataError(DataError):
    pass


class OutOfDomainError(DataError):
    pass


class FormatError(DataError):
    pass


class ConfigurationError(StmraError, ValueError):
    pass


class ParameterError(StmraError, ValueError):
    pass


class NumericalError(StmraError, ArithmeticError):
    """Numerical failure (maps to CLI exit code 3)."""


class ConditioningError(NumericalError):
    """A region matrix could not be factorized.

    ``region`` holds the path of the offending region (tuple of child
    indices from the root) when known.
    """

    def __init__(self, message, region=None):
        if region is not None:
            message = f"{message} (region path {region}); consider raising the nugget lower bound"
        super().__init__(message)
        self.region = region


class ModelValidityError(NumericalError):
    pass


class InitializationError(NumericalError):
    pass


class OptimizationError(NumericalError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace

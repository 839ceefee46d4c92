"""
Exception hierarchy shared by all record-inference modules.

Every error raised on purpose by the library derives from UgRecordsError,
so callers (the CLI in particular) can tell user mistakes from numerical
trouble by class alone.
"""
from typing import *


class UgRecordsError(Exception):
    """Base class of every library error"""


class ParameterDomainError(UgRecordsError, ValueError):
    """Parameter or argument outside its admissible domain"""


class InsufficientDataError(UgRecordsError, ValueError):
    """Too few observations or records for the requested operation"""


class DimensionError(UgRecordsError, ValueError):
    """Lengths of records and weights (or other paired inputs) disagree"""


class MissingQuantileError(UgRecordsError, KeyError):
    """Probability requested from a quantile table that does not carry it"""

    def __str__(self):
        return str(self.args[0]) if self.args else ''


class UndefinedCorrelationError(UgRecordsError, ValueError):
    """Pearson correlation requested on a zero-variance input"""


class ConditioningError(UgRecordsError, ArithmeticError):
    """
    Failed positive-definite factorization or near-singular system
    :param message: human readable description
    :param context: (n, k, theta) or any other identifying values
    """

    def __init__(self, message: str, context: Optional[Dict] = None):
        super().__init__(message)
        self.context = context or {}


class OptimizationError(UgRecordsError, ArithmeticError):
    """
    Iterative optimizer stopped without meeting its convergence criterion
    :param message: human readable description
    :param diagnostics: last iterate, gradient norm, iteration count, ...
    """

    def __init__(self, message: str, diagnostics: Optional[Dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UndefinedBoundError(UgRecordsError, ArithmeticError):
    """
    Scale interval bound with a nonpositive denominator
    :param message: human readable description
    :param quantile: offending pivot quantile
    """

    def __init__(self, message: str, quantile: float):
        super().__init__(message)
        self.quantile = quantile


# exit code 1 in the CLI
USER_ERRORS = (ParameterDomainError, InsufficientDataError, DimensionError,
               MissingQuantileError, UndefinedCorrelationError)
# exit code 2 in the CLI
NUMERICAL_ERRORS = (ConditioningError, OptimizationError, UndefinedBoundError)


def require(condition: bool, error_cls: Type[UgRecordsError], message: str):
    """
    Raise error_cls(message) unless condition holds
    :param condition: precondition to check
    :param error_cls: error class to raise
    :param message: error message
    """
    if not condition:
        raise error_cls(message)

"""
Exceptions raised by the solver. Each class carries the process exit code the
management commands translate it to.
"""


class FkwalkError(Exception):
    exit_code = 3


class UsageError(FkwalkError, ValueError):
    """An operation was called with arguments outside its contract."""

    exit_code = 2


class ConfigurationError(FkwalkError):
    """The domain, run configuration or grid cannot be used as given."""

    exit_code = 2


class FileFormatError(ConfigurationError):
    """A field CSV or lookup table file could not be parsed."""


class NumericalFailure(FkwalkError, ArithmeticError):
    exit_code = 3


class CensoredWalkError(NumericalFailure):
    """A walk stopped by the step budget has no payoff."""


class EmptyEstimateError(NumericalFailure):
    """Every walk started from a point was censored."""

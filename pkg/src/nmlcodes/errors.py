"""Exception hierarchy shared by every module.

Each family maps onto one CLI exit code (see :mod:`nmlcodes.cli`).
"""


class NMLError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidInputError(NMLError, ValueError):
    """Malformed arguments or data (empty sample, bad exponent, ...)."""

    exit_code = 2


class BudgetExceededError(NMLError):
    """An exact enumeration or rejection loop would exceed its configured budget."""

    exit_code = 3


class NumericalError(NMLError, ArithmeticError):
    """A numerical procedure failed (overflow, no bracket, no convergence)."""

    exit_code = 4


class FitError(NumericalError):
    """Maximum-likelihood fit failed for a particular sample."""

"""Exception types shared across the package."""


class GibbsbcError(Exception):
    """Base class for all package errors."""


class ContractError(GibbsbcError, ValueError):
    """A documented precondition was violated by the caller."""


class QuadratureError(GibbsbcError, ArithmeticError):
    """Adaptive integration failed to reach the requested tolerance.

    Carries the achieved absolute error estimate so callers can decide
    whether to retry with a looser tolerance.
    """

    def __init__(self, message: str, achieved: float = float("nan")):
        super().__init__(message)
        self.achieved = achieved


class OverflowBudgetError(GibbsbcError, OverflowError):
    """A requested value exceeds what IEEE-754 doubles can represent.

    Raised by cascade and boundary-field constructions when even the
    log-domain representation of the value would overflow, together with
    the largest feasible index so callers can truncate their schedule.
    """

    def __init__(self, message: str, largest_feasible: int | None = None):
        super().__init__(message)
        self.largest_feasible = largest_feasible


class SchemaError(GibbsbcError, ValueError):
    """A config file or measure specification failed validation."""

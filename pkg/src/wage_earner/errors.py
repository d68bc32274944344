"""Exception hierarchy shared by all modules."""


class WageEarnerError(Exception):
    """Base class for all package errors."""


class DomainError(WageEarnerError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SingularMarketError(WageEarnerError, ValueError):
    """sigma sigma^T is singular or too ill-conditioned to invert."""


class AccuracyError(WageEarnerError, ArithmeticError):
    """A numerical kernel could not reach its requested tolerance."""


class NumericalError(WageEarnerError, ArithmeticError):
    """Non-finite values appeared in a computation."""


class OracleFailure(WageEarnerError, RuntimeError):
    """An independent check (e.g. the Newton argmax) failed to converge."""


class PathError(WageEarnerError, RuntimeError):
    """A strategy produced an invalid action during simulation."""


class SchemaError(WageEarnerError, ValueError):
    """A scenario document does not match the expected schema."""

"""Exception hierarchy shared across the package."""


class BookmakingError(Exception):
    """Base class for all package errors."""


class ValidationError(BookmakingError, ValueError):
    """Inputs violate a documented invariant."""


class DomainError(BookmakingError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigurationError(BookmakingError, ValueError):
    """An object was used without the configuration it needs."""


class PolicyError(BookmakingError, ValueError):
    """A pricing policy produced an inadmissible price."""


class NumericalError(BookmakingError, ArithmeticError):
    """An iterative method failed to reach its tolerance."""

    def __init__(self, operation, message, residual=None):
        self.operation = operation
        self.residual = residual
        text = f"{operation}: {message}"
        if residual is not None:
            text += f" (residual={residual:.3e})"
        super().__init__(text)


class BracketError(NumericalError):
    """Root bracket does not contain a sign change."""

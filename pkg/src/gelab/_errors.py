"""Exception hierarchy shared by all gelab modules."""


class GELError(Exception):
    """Base class for library errors."""


class ContractViolation(GELError, ValueError):
    """Raised when inputs break an operation's preconditions."""


class InvalidActivationError(GELError, ValueError):
    """Raised for activations that are non-finite, not odd, or have unbounded derivatives."""


class DomainError(GELError, ValueError):
    """Raised when arguments fall outside the mathematical domain of a function."""


class SolverError(GELError, RuntimeError):
    """Raised when a numerical routine cannot produce a trustworthy answer."""


class ConfigError(GELError, ValueError):
    """Raised for invalid experiment configuration; carries the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")

class ConfigurationError(ValueError):
    """Raised for invalid configuration values or mismatched controllers."""


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments outside its domain."""


class InvalidStateError(RuntimeError):
    """Raised when an operation cannot proceed from the current state."""

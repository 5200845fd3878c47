"""Exception hierarchy shared across the toolkit."""


class OodFuseError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(OodFuseError):
    """Invalid configuration value (bad bin count, missing seed, ...)."""


class DomainError(OodFuseError):
    """Input violates an operation precondition (bad index, empty vector, ...)."""


class FormatError(OodFuseError):
    """File does not conform to the tensor/report wire format."""


class ValidationError(OodFuseError):
    """Tensor content violates a structural invariant."""

    def __init__(self, message, code=None, coords=None):
        super().__init__(message)
        self.code = code
        self.coords = coords

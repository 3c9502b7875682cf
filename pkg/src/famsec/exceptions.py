"""Exception hierarchy shared across the package."""


class FamsecError(Exception):
    """Base class for all errors raised by famsec."""


class InvalidInputError(FamsecError, ValueError):
    """Raised when arguments violate a documented precondition."""


class ConfigError(InvalidInputError):
    """A task configuration or sweep spec is invalid.

    ``field`` names the offending entry when one can be identified.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericalError(FamsecError, ArithmeticError):
    """A numerical procedure failed (e.g. singular kernel matrix)."""


class NotFittedError(FamsecError, AttributeError):
    pass

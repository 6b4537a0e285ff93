"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: malformed config, inconsistent shapes, refused sizes."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed to converge or produced non-finite values."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual

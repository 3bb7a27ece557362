"""Exception types shared across the package."""


class DomainError(ValueError):
    """Parameters outside the region where a quantity is defined or finite."""


class NumericalError(RuntimeError):
    """A numerical routine failed to meet its accuracy contract."""


class EigensolverError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BracketError(NumericalError):
    def __init__(self, message, lower=None, upper=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper

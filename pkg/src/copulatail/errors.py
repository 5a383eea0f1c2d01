"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment configuration or estimator prerequisites."""


class DecompositionError(ValueError):
    """Matrix factorisation failed (e.g. not positive definite)."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SaturationError(ValueError):
    """A NORTA transform produced a non-finite coordinate."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericalError(ArithmeticError):
    """A numerical routine failed to converge or produced garbage."""


class InfeasibleError(NumericalError):
    """No feasible point could be located."""

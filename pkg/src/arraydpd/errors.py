"""Exception hierarchy shared by all modules."""


class ArrayDpdError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ArrayDpdError, ValueError):
    """Invalid parameters, dimensions or configuration keys."""


class InputError(ArrayDpdError, ValueError):
    """Signal or data input that cannot be processed (too short, unpaired, ...)."""


class SingularityError(ArrayDpdError, ArithmeticError):
    """A matrix or scalar that must be invertible is not."""


class ConditioningError(SingularityError):
    """Numerically singular basis covariance; ``order`` names the offending basis order."""

    def __init__(self, message, order=None):
        super().__init__(message)
        self.order = order


class DivergenceError(ArrayDpdError, RuntimeError):
    """Adaptive learning diverged."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace

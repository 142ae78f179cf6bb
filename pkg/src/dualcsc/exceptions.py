"""Exception types raised by the solvers."""


class DimensionError(ValueError):
    """Raised when array shapes are inconsistent."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces non-finite or inconsistent values."""

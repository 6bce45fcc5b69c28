"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised for malformed arguments: wrong shapes, invalid covariances, bad files."""


class NumericalError(ArithmeticError):
    """Raised when a factorization or solve fails, or a result becomes non-finite."""

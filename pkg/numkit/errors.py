"""
ViBE - Numeric kernel errors
"""


class NumericError(Exception):
    """Base class for numeric failures (exit code 3 at the CLI)"""
    pass


class DimensionMismatchError(NumericError, ValueError):
    """Raised when an input does not fit the layer it is fed to"""

    def __init__(self, what: str, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected dimension {expected}, got {actual}")


class StaleTapeError(NumericError):
    """Raised when a tape is replayed against a different or updated network"""
    pass


class DegenerateDirectionError(NumericError):
    """Raised when a vector is too short to have a direction"""
    pass


class NonFiniteGradientError(NumericError):
    """Raised when an optimizer receives NaN or inf gradients"""
    pass


class NonFiniteLossError(NumericError):
    """Raised when a training loss becomes NaN or inf"""
    pass

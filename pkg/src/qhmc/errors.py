"""Exception types raised by qhmc."""


class QHMCError(Exception):
    """Base class for all qhmc errors."""


class InvalidParameterError(QHMCError, ValueError):
    """A parameter is outside its admissible range."""


class NonFiniteResultError(QHMCError, ArithmeticError):
    """An evaluator returned inf or nan.

    The offending input is kept on ``point`` so callers can report it.
    """

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class UnsupportedDimensionError(QHMCError, ValueError):
    pass


class UnsupportedKineticError(QHMCError, ValueError):
    pass


class ConfigError(QHMCError, ValueError):
    """Missing or malformed experiment configuration."""

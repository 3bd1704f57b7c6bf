"""Exception hierarchy; each family maps to one CLI exit code."""


class MfcastError(Exception):
    exit_code = 1


class ConfigError(MfcastError, ValueError):
    """Invalid parameters or configuration."""

    exit_code = 2


class DataError(MfcastError, ValueError):
    """Malformed, missing or degenerate input data."""

    exit_code = 3


class NumericError(MfcastError, ArithmeticError):
    """Non-finite values or divergence during computation."""

    exit_code = 4


class TrainingDiverged(NumericError):
    """Training produced a non-finite loss; the history up to that point is kept."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history

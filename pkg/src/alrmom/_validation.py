"""Exception types and small input-validation helpers shared across modules."""

import numpy as np


class InvalidArgument(ValueError):
    pass


class SingularStepError(ArithmeticError):
    """Step size denominator vanished while the iterate is not optimal."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DivergenceError(ArithmeticError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ParseError(ValueError):
    """Malformed input file. ``line`` is 1-based."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` is a dotted path."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


def as_vector(x, dim=None, name="x"):
    """Return ``x`` as a finite 1-D float64 array, checking its length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidArgument(f"{name} must be one-dimensional, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise InvalidArgument(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return arr


def check_beta(beta):
    beta = float(beta)
    if not 0.0 <= beta < 1.0:
        raise InvalidArgument(f"beta must lie in [0, 1), got {beta}")
    return beta


def check_positive(value, name):
    value = float(value)
    if not value > 0:
        raise InvalidArgument(f"{name} must be positive, got {value}")
    return value

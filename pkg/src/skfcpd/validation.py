"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

# Spacings below this are rejected rather than merged: they make the implied
# covariance matrix numerically singular long before they are "equal" times.
MIN_SPACING = 1e-9


def as_1d_float_array(x, name: str = "values") -> np.ndarray:
    """Coerce to a 1-D float array, rejecting higher-dimensional input."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def check_times(times, name: str = "times") -> np.ndarray:
    """Validate a strictly increasing time vector and return it as an array."""
    arr = as_1d_float_array(times, name)
    if arr.size == 0:
        raise InvalidInputError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite")
    if arr.size > 1:
        gaps = np.diff(arr)
        if np.any(gaps <= 0):
            raise InvalidInputError(f"{name} must be strictly increasing")
        if np.any(gaps < MIN_SPACING):
            raise InvalidInputError(
                f"{name} contains a spacing below {MIN_SPACING:g}; merge such points upstream"
            )
    return arr


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InvalidInputError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_nonnegative(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise InvalidInputError(f"{name} must be a nonnegative finite number, got {value!r}")
    return value


def check_probability(value: float, name: str, *, open_interval: bool = False) -> float:
    value = float(value)
    ok = 0.0 < value < 1.0 if open_interval else 0.0 <= value <= 1.0
    if not ok:
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise InvalidInputError(f"{name} must lie in {bounds}, got {value!r}")
    return value


def check_same_length(a, b, name_a: str, name_b: str) -> None:
    if len(a) != len(b):
        raise InvalidInputError(
            f"{name_a} and {name_b} must have equal length, got {len(a)} and {len(b)}"
        )

"""Input checks shared by the estimator classes and the CLI."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array, check_consistent_length


def check_running_variable(X):
    """Return the running variable as a finite 1-d float array.

    Accepts a 1-d array or a single-column 2-d array.
    """
    arr = check_array(X, ensure_2d=False, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"expected a single running variable, got {arr.shape[1]} columns")
        arr = arr[:, 0]
    return arr


def check_outcome(y, X):
    arr = check_array(y, ensure_2d=False, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("outcome must be 1-d")
    check_consistent_length(X, arr)
    return arr


def check_optional_column(values, X, name, binary=False):
    if values is None:
        return None
    arr = check_array(values, ensure_2d=False, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-d")
    check_consistent_length(X, arr)
    if binary and not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must be 0/1")
    return arr


def check_fraction(value, name, low=0.0, high=1.0, closed_low=True, closed_high=False):
    if not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number")
    ok_low = value >= low if closed_low else value > low
    ok_high = value <= high if closed_high else value < high
    if not (ok_low and ok_high):
        raise ValueError(f"{name}={value} outside the allowed range")
    return float(value)


def check_quantile_levels(u):
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((arr <= 0) | (arr >= 1)) or not np.all(np.isfinite(arr)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    return arr

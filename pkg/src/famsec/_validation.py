"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""

import math

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidInputError


def check_finite_real(value, name):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidInputError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(value):
        raise InvalidInputError(f"{name} must be finite, got {value!r}")
    return value


def check_in_interval(value, name, low, high, *, closed_low=True, closed_high=True):
    value = check_finite_real(value, name)
    ok_low = value >= low if closed_low else value > low
    ok_high = value <= high if closed_high else value < high
    if not (ok_low and ok_high):
        lb = "[" if closed_low else "("
        rb = "]" if closed_high else ")"
        raise InvalidInputError(f"{name} must lie in {lb}{low}, {high}{rb}, got {value!r}")
    return value


def check_positive_int(value, name, *, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise InvalidInputError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else ">= 1"
        raise InvalidInputError(f"{name} must be {bound}, got {value}")
    return value


def check_scale(low, high, name="scale"):
    low = check_finite_real(low, f"{name} low")
    high = check_finite_real(high, f"{name} high")
    if not low < high:
        raise InvalidInputError(f"{name} requires low < high, got [{low}, {high}]")
    return low, high


def check_samples(returns, name="returns"):
    """Return a finite 1-d float array with at least one entry."""
    arr = np.asarray(returns, dtype=float)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.size == 0:
        raise InvalidInputError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite")
    return arr


def check_features(X, n_features=None):
    try:
        X = check_array(X, dtype=float, ensure_2d=True)
    except ValueError as exc:
        raise InvalidInputError(str(exc)) from None
    if n_features is not None and X.shape[1] != n_features:
        raise InvalidInputError(
            f"expected {n_features} features, got {X.shape[1]}"
        )
    return X

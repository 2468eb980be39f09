"""Input validation helpers shared by the solvers and estimators."""

import numpy as np


class ShapeError(ValueError):
    """Dimension mismatch between operators and vectors."""


def check_vector(x, n=None, name="vector"):
    """Return ``x`` as a finite 1-D float array, optionally of length ``n``."""
    arr = np.array(x, dtype=float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ShapeError(f"{name} must have length {n}, got {arr.shape[0]}")
    if arr.shape[0] == 0:
        raise ShapeError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_sign(value, allowed, name):
    if value not in allowed:
        raise ValueError(f"{name} must be one of {sorted(allowed)}, got {value!r}")
    return int(value)


def check_tolerances(atol, rtol, max_iterations):
    if atol < 0 or rtol < 0:
        raise ValueError("atol and rtol must be nonnegative")
    if max_iterations is not None and max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")

"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""
from __future__ import annotations

import numpy as np

from .exceptions import InvalidArgumentError, NumericInputError


def check_finite(x, name: str = "input") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericInputError(f"{name} contains NaN or infinite values")
    return arr


def check_batch(X, n_features: int | None = None, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite 2-D float64 array with ``n_features`` columns.

    A 1-D input is treated as a single sample.
    """
    arr = check_finite(X, name)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise InvalidArgumentError(f"{name} is an empty batch")
    if n_features is not None and arr.shape[1] != n_features:
        raise InvalidArgumentError(
            f"{name} has {arr.shape[1]} features, expected {n_features}"
        )
    return arr


def check_weights(w, n: int, low: float | None = None, high: float | None = None) -> np.ndarray:
    arr = check_finite(w, "weights").reshape(-1)
    if arr.shape[0] != n:
        raise InvalidArgumentError(f"got {arr.shape[0]} weights for a batch of {n}")
    if low is not None and np.any(arr < low):
        raise InvalidArgumentError(f"weights must be >= {low}")
    if high is not None and np.any(arr > high):
        raise InvalidArgumentError(f"weights must be <= {high}")
    return arr

"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_positive(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name}={value!r} must be a positive finite number")
    return float(value)


def check_unit_interval(values, name: str, open_left: bool = False) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    low_ok = arr > 0 if open_left else arr >= 0
    if not np.all(low_ok & (arr <= 1)):
        raise ValueError(f"{name} must lie in {'(' if open_left else '['}0, 1]")
    return arr


def check_vector(value, name: str, length: int, nonneg: bool = True) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (length,):
        raise ValueError(f"{name} must have {length} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or (nonneg and np.any(arr < 0)):
        raise ValueError(f"{name} must be finite{' and non-negative' if nonneg else ''}")
    return arr


def check_rows(X, n_features: int, name: str = "X") -> np.ndarray:
    X = check_array(X, dtype=float, ensure_2d=True)
    if X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} columns, expected {n_features}")
    return X

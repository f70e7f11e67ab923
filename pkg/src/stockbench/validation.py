"""Small input-validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from .errors import ContractError


def as_float_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-d float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size else X.reshape(0, 0)
    if X.ndim != 2:
        raise ContractError(f"{name} must be 2-d, got shape {X.shape}")
    if X.size and not np.isfinite(X).all():
        raise ContractError(f"{name} contains non-finite values")
    return X


def as_float_vector(y, name: str = "y") -> np.ndarray:
    """Coerce to a finite 1-d float64 array."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size and not np.isfinite(y).all():
        raise ContractError(f"{name} contains non-finite values")
    return y


def check_windows_against(X, window: int, name: str = "X") -> np.ndarray:
    """Validate a window matrix against a fitted/expected window length."""
    X = as_float_matrix(X, name)
    if X.shape[1] != window:
        raise ContractError(
            f"{name} has window length {X.shape[1]}, model expects {window}"
        )
    return X

"""Lightweight input validation helpers shared across the package."""

import numpy as np


def as_complex_matrix(x, name="X"):
    """Coerce to a 2D complex128 array, rejecting non-finite entries."""
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a vector or a 2D array, got ndim={arr.ndim}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_real_matrix(x, name="X"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a vector or a 2D array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_nonzero_rows(x, name="X"):
    """Reject rows with zero Euclidean norm."""
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise ValueError(f"{name} contains zero-norm rows")
    return norms


def check_unit_norm(v, tol=1e-6, name="w"):
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"{name} must have unit norm (got {norm:.8f})")


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")

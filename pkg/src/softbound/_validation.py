"""Input validation helpers shared by the estimators and pure functions."""

import numpy as np


def check_matrix(X, name="X", min_rows=1):
    """Return ``X`` as a finite 2-D float64 array.

    Raises:
        ValueError: on wrong rank, too few rows, zero columns or non-finite
            entries. The message names the first offending row.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} row(s), got {arr.shape[0]}")
    if arr.shape[1] < 1:
        raise ValueError(f"{name} must have dim >= 1")
    bad = ~np.isfinite(arr)
    if bad.any():
        row = int(np.argwhere(bad)[0, 0])
        raise ValueError(f"{name} has a non-finite value in row {row}")
    return arr


def check_vector(x, name="x", length=None):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def check_same_dim(*named):
    """Raise if the given ``(name, matrix)`` pairs disagree on column count."""
    dims = {name: m.shape[1] for name, m in named}
    if len(set(dims.values())) > 1:
        detail = ", ".join(f"{k}={v}" for k, v in dims.items())
        raise ValueError(f"dimension mismatch: {detail}")


def check_index(i, T, name="index"):
    i = int(i)
    if not 0 <= i < T:
        raise IndexError(f"{name}={i} out of range [0, {T - 1}]")
    return i

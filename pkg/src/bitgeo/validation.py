"""Shared input validation helpers.

Real-valued arguments across the package are coerced to C-contiguous float64
arrays with all entries finite; anything else raises ValueError.
"""

import numpy as np


def as_real_array(x, name="array", ndim=None):
    """Coerce x to a float64 ndarray and reject NaN/Inf.

    Args:
        x: array-like input.
        name: label used in error messages.
        ndim: required dimensionality, or None for any.

    Returns:
        A C-contiguous float64 ndarray.
    """
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_real_vector(x, name="vector"):
    return as_real_array(x, name=name, ndim=1)


def as_real_matrix(x, name="matrix"):
    return as_real_array(x, name=name, ndim=2)


def check_positive_int(value, name="value"):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    if value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value}")
    return int(value)


def check_same_length(da, db, name_a="a", name_b="b"):
    if da != db:
        raise ValueError(f"dimension mismatch: {name_a} has length {da}, {name_b} has length {db}")

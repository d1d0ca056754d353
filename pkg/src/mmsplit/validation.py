"""Input validation helpers shared by every module."""

from __future__ import annotations

import numbers

import numpy as np


class InvalidSpaceError(ValueError):
    """Raised when a distance matrix or weight vector breaks the metric measure axioms."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or []


class NotFittedError(ValueError, AttributeError):
    """Estimator used before ``fit``."""


def check_field(space, values, name="field"):
    """Return ``values`` as a finite float vector of length ``space.n``."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != space.n:
        raise ValueError(f"{name} must be a vector of length {space.n}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def check_index(space, i, name="index"):
    if not isinstance(i, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(i).__name__}")
    if not 0 <= i < space.n:
        raise IndexError(f"{name} {i} out of range for a space with {space.n} points")
    return int(i)


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_time_grid(t_grid, lo=0.0, hi=1.0, name="t_grid"):
    ts = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if ts.ndim != 1 or ts.size == 0:
        raise ValueError(f"{name} must be a non-empty list of times")
    if np.any(ts < lo) or np.any(ts > hi):
        raise ValueError(f"{name} entries must lie in [{lo}, {hi}]")
    return ts


def check_dimension(N, allow_inf=True):
    N = float(N)
    if np.isnan(N) or N < 1 or (not allow_inf and np.isinf(N)):
        raise ValueError(f"dimension parameter must be >= 1, got {N}")
    return N


def check_same_space(a, b):
    if a.space is not b.space:
        raise ValueError("measures live on different spaces")

"""Flat parameter-vector arithmetic.

Every model, drift and optimizer buffer in the simulator is a 1-D float64
numpy array in one fixed global coordinate order. The helpers here enforce
finiteness and a fixed summation order so that trajectories are
bit-reproducible.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class NonFiniteError(ValueError):
    """Raised when a parameter vector contains NaN or Inf."""


def as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D parameter vector, got shape {arr.shape}")
    return arr


def check_finite(v: np.ndarray, what: str = "vector") -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{what} contains non-finite entries")
    return v


def zeros(d: int) -> np.ndarray:
    return np.zeros(d, dtype=np.float64)


def dot(x, y) -> float:
    x, y = as_vector(x), as_vector(y)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    return float(np.dot(x, y))


def norm_sq(v) -> float:
    """Squared Euclidean norm. Rejects non-finite input."""
    v = check_finite(as_vector(v))
    return float(np.dot(v, v))


def axpy(a: float, x, y) -> np.ndarray:
    """Return ``a * x + y`` as a new vector."""
    x, y = as_vector(x), as_vector(y)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    return check_finite(a * x + y, "axpy result")


def mean(vs: Sequence) -> np.ndarray:
    """Elementwise mean, accumulated in the given (ascending client id) order."""
    if len(vs) == 0:
        raise ValueError("mean of an empty sequence")
    first = as_vector(vs[0])
    acc = first.copy()
    for v in vs[1:]:
        v = as_vector(v)
        if v.shape != first.shape:
            raise ValueError(f"length mismatch: {first.size} vs {v.size}")
        acc += v
    return check_finite(acc / len(vs), "mean")

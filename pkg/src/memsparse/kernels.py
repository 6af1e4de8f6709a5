"""Dense float64 primitives: matrix-vector product, row softmax, stable top-k.

Matrices and vectors are plain ``numpy.ndarray`` objects (2-D and 1-D,
``float64``). Every function validates shape and finiteness up front and
never mutates its arguments.
"""

from __future__ import annotations

import numpy as np

from .errors import BudgetError, DomainError, ShapeError

__all__ = ["as_matrix", "as_vector", "matvec", "softmax_row", "topk_indices"]


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def matvec(m, v) -> np.ndarray:
    """Return ``m @ v`` after checking ``m.cols == v.dim``."""
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: matrix has {m.shape[1]} cols, vector has dim {v.shape[0]}")
    return m @ v


def softmax_row(v) -> np.ndarray:
    """Numerically stable softmax of a single vector (max subtracted first)."""
    v = as_vector(v)
    if v.size == 0:
        raise DomainError("softmax of an empty vector")
    z = np.exp(v - v.max())
    return z / z.sum()


def topk_indices(scores, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores, returned in ascending index order.

    Ties go to the smaller index, so the result is a deterministic function
    of ``scores`` and nested budgets give nested selections.
    """
    scores = as_vector(scores, "scores")
    k = int(k)
    if k < 0:
        raise BudgetError(f"k must be non-negative, got {k}")
    if k > scores.size:
        raise BudgetError(f"k={k} exceeds the {scores.size} available scores")
    # stable argsort on the negated scores keeps equal scores in index order
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:k])

"""
Shared pydantic field types for matrix-valued data.

Matrices are held as read-only float64 numpy arrays and serialize as
row-major nested lists.
"""

from typing import Annotated, Any, List

import numpy as np
from pydantic import BeforeValidator, PlainSerializer


def _to_matrix(value: Any) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ValueError(f"expected a matrix, got an array of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    arr.setflags(write=False)
    return arr


def _to_loose_matrix(value: Any) -> np.ndarray:
    # Reports may hold +/-inf entries for unbounded bounds.
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        arr = np.atleast_2d(arr)
    arr.setflags(write=False)
    return arr


def _to_list(arr: np.ndarray) -> List[List[float]]:
    return np.asarray(arr, dtype=float).tolist()


Matrix = Annotated[
    np.ndarray,
    BeforeValidator(_to_matrix),
    PlainSerializer(_to_list, return_type=list)
]

ReportMatrix = Annotated[
    np.ndarray,
    BeforeValidator(_to_loose_matrix),
    PlainSerializer(_to_list, return_type=list)
]

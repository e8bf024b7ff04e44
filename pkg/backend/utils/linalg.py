"""
Tolerance-aware dense linear algebra shared by every service.

Rank, null space and row space are all read off one SVD; symmetric inputs are
symmetrized before any eigensolve.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple
import logging

import numpy as np
from scipy import linalg as sla

from ..core.config import get_settings
from ..core.exceptions import InvalidInputError

# Configure logging
logger = logging.getLogger(__name__)

ORTHONORMAL_ATOL = 1e-12
SYMMETRY_ATOL = 1e-10


@dataclass(frozen=True)
class Tolerance:
    """Numerical tolerances; rel_rank_tol of None selects eps * max(shape)."""

    rel_rank_tol: Optional[float] = None
    psd_tol: float = 1e-10
    solve_tol: float = 1e-7

    def __post_init__(self):
        if self.rel_rank_tol is not None and not 0 < self.rel_rank_tol < 1:
            raise InvalidInputError("rel_rank_tol must lie in (0, 1)", rel_rank_tol=self.rel_rank_tol)
        if self.psd_tol <= 0 or self.solve_tol <= 0:
            raise InvalidInputError("tolerances must be strictly positive")

    @classmethod
    def from_settings(cls) -> 'Tolerance':
        """Build the tolerance policy from the active configuration."""
        settings = get_settings()
        return cls(
            rel_rank_tol=settings.rel_rank_tol,
            psd_tol=settings.psd_tol,
            solve_tol=settings.solve_tol
        )

    def rank_cutoff(self, shape: Tuple[int, ...]) -> float:
        """Relative singular value cutoff for a matrix of the given shape."""
        if self.rel_rank_tol is not None:
            return self.rel_rank_tol
        return float(np.finfo(float).eps * max(max(shape), 1))


@dataclass(frozen=True)
class OrthonormalBasis:
    """Columns of `vectors` are orthonormal vectors in R^ambient_dim."""

    vectors: np.ndarray
    ambient_dim: int = field(default=0)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 2:
            raise InvalidInputError("basis vectors must be a 2-D array")
        object.__setattr__(self, 'vectors', vectors)
        object.__setattr__(self, 'ambient_dim', vectors.shape[0])

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.dim == 0

    def projector(self) -> np.ndarray:
        """Orthogonal projector onto the span."""
        return self.vectors @ self.vectors.T


def _as_finite_matrix(A, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be a matrix", shape=list(A.shape))
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def symmetrize(A: np.ndarray) -> np.ndarray:
    """Return (A + A^T) / 2."""
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def _svd(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return sla.svd(A, full_matrices=True, lapack_driver='gesvd')


def _numerical_rank(s: np.ndarray, shape, tol: Tolerance) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol.rank_cutoff(shape) * s[0]))


def rank_tol(A, tol: Optional[Tolerance] = None) -> int:
    """
    Numerical rank: singular values above rel_rank_tol times the largest.

    Args:
        A: Finite matrix
        tol: Tolerance policy (defaults to the configured one)

    Returns:
        int: Numerical rank
    """
    tol = tol or Tolerance.from_settings()
    A = _as_finite_matrix(A)
    if A.size == 0:
        return 0
    s = sla.svdvals(A)
    return _numerical_rank(s, A.shape, tol)


def null_basis(A, tol: Optional[Tolerance] = None) -> OrthonormalBasis:
    """
    Orthonormal basis of the numerical null space of A.

    Args:
        A: Finite matrix (m x n)
        tol: Tolerance policy

    Returns:
        OrthonormalBasis: n x (n - rank) basis
    """
    tol = tol or Tolerance.from_settings()
    A = _as_finite_matrix(A)
    n = A.shape[1]
    if A.shape[0] == 0 or A.size == 0:
        return OrthonormalBasis(np.eye(n))
    _, s, vh = _svd(A)
    rank = _numerical_rank(s, A.shape, tol)
    return OrthonormalBasis(vh[rank:].T.copy())


def row_basis(A, tol: Optional[Tolerance] = None) -> OrthonormalBasis:
    """
    Orthonormal basis of the row space of A.

    Args:
        A: Finite matrix (m x n)
        tol: Tolerance policy

    Returns:
        OrthonormalBasis: n x rank basis
    """
    tol = tol or Tolerance.from_settings()
    A = _as_finite_matrix(A)
    n = A.shape[1]
    if A.shape[0] == 0 or A.size == 0:
        return OrthonormalBasis(np.zeros((n, 0)))
    _, s, vh = _svd(A)
    rank = _numerical_rank(s, A.shape, tol)
    return OrthonormalBasis(vh[:rank].T.copy())


def complete_unitary(partial: OrthonormalBasis) -> np.ndarray:
    """
    Extend an orthonormal set to a square orthogonal matrix.

    Args:
        partial: Orthonormal columns

    Returns:
        np.ndarray: Orthogonal matrix whose leading columns equal `partial`
    """
    V = partial.vectors
    n, k = V.shape
    if not np.allclose(V.T @ V, np.eye(k), atol=ORTHONORMAL_ATOL * max(n, 1) * 10):
        raise InvalidInputError("partial basis is not orthonormal")
    if k == n:
        return V.copy()
    complement = sla.null_space(V.T) if k > 0 else np.eye(n)
    return np.hstack([V, complement])


def is_psd(A, tol: Optional[Tolerance] = None, strict: bool = False) -> bool:
    """
    Check positive semidefiniteness with a relative eigenvalue slack.

    Args:
        A: Symmetric matrix
        tol: Tolerance policy
        strict: Require lambda_min > 0 instead of the slack test

    Returns:
        bool: True if lambda_min(A) >= -psd_tol * ||A|| (or > 0 when strict)
    """
    tol = tol or Tolerance.from_settings()
    A = _as_finite_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError("PSD check needs a square matrix", shape=list(A.shape))
    if A.size == 0:
        return True
    scale = max(np.max(np.abs(A)), 1.0)
    if np.max(np.abs(A - A.T)) > SYMMETRY_ATOL * scale:
        raise InvalidInputError("matrix is not symmetric")
    eigvals = sla.eigvalsh(symmetrize(A))
    if strict:
        return bool(eigvals[0] > 0)
    return bool(eigvals[0] >= -tol.psd_tol * sla.norm(A, 2))


def psd_sqrt(A: np.ndarray, inverse: bool = False, floor: float = 0.0) -> np.ndarray:
    """Symmetric square root (or inverse square root) of a PSD matrix."""
    w, V = sla.eigh(symmetrize(A))
    w = np.maximum(w, floor)
    if inverse:
        w = np.where(w > 0, 1.0 / np.sqrt(np.where(w > 0, w, 1.0)), 0.0)
    else:
        w = np.sqrt(w)
    return symmetrize((V * w) @ V.T)


def spd_inverse(A: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    n = A.shape[0]
    factor = sla.cho_factor(symmetrize(A))
    return symmetrize(sla.cho_solve(factor, np.eye(n)))


def block_diag_from(blocks) -> np.ndarray:
    """Block-diagonal matrix from a sequence of square blocks."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    if not blocks:
        return np.zeros((0, 0))
    return sla.block_diag(*blocks)

"""
Sanitization mechanisms: applying (C, Theta) to measurements, rewriting a
mechanism into normalized form, and approximating compression by noise.
"""

from typing import List, Optional, Sequence
import logging

import numpy as np
from scipy import linalg as sla

from ..core.exceptions import InvalidInputError
from ..models import Sanitization
from ..utils.linalg import Tolerance, block_diag_from, symmetrize

# Configure logging
logger = logging.getLogger(__name__)


def _blocks(sanitization: Sanitization):
    for i in range(1, len(sanitization.agent_dims) + 1):
        yield sanitization.C_block(i), sanitization.Theta_block(i)


def _fix_signs(Q: np.ndarray) -> np.ndarray:
    # Largest-magnitude entry of every eigenvector made positive.
    if Q.size == 0:
        return Q
    pivots = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[pivots, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs


def normalize(sanitization: Sanitization, tol: Optional[Tolerance] = None) -> Sanitization:
    """
    Rewrite (C, Theta) as (C', Lambda_b) with Lambda_b diagonal in {0, 1}.

    Per agent block, Theta_i = Q diag(w) Q^T; positive eigenvalues are moved
    into the compression, C'_i = diag(w+)^(-1/2) Q^T C_i, where w+ replaces
    zero eigenvalues by 1. The perturbed CRLB is unchanged.

    Args:
        sanitization: Mechanism to normalize
        tol: Tolerance policy deciding which eigenvalues are zero

    Returns:
        Sanitization: Equivalent mechanism with 0/1 diagonal noise
    """
    tol = tol or Tolerance.from_settings()
    C_blocks, noise_blocks = [], []
    for C_i, Theta_i in _blocks(sanitization):
        w, Q = sla.eigh(symmetrize(Theta_i))
        Q = _fix_signs(Q)
        top = max(float(np.max(w)), 0.0)
        positive = w > tol.psd_tol * top if top > 0 else np.zeros_like(w, dtype=bool)
        w_plus = np.where(positive, w, 1.0)
        C_blocks.append((Q / np.sqrt(w_plus)).T @ C_i)
        noise_blocks.append(np.diag(positive.astype(float)))
    return Sanitization(
        C=block_diag_from(C_blocks),
        Theta=block_diag_from(noise_blocks),
        agent_dims=list(sanitization.agent_dims)
    )


def apply(sanitization: Sanitization, y: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """
    Sanitize a stacked measurement vector: C y + xi with xi ~ N(0, Theta).

    Args:
        sanitization: Mechanism (C, Theta)
        y: Length-N measurement vector
        rng: Seeded generator; advanced by one draw of N normals

    Returns:
        np.ndarray: Sanitized measurements
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != sanitization.N:
        raise InvalidInputError(f"measurement has length {y.shape[0]}, expected {sanitization.N}")
    w, V = sla.eigh(symmetrize(sanitization.Theta))
    if np.any(w < 0):
        logger.debug(f"Clamping {int(np.sum(w < 0))} negative noise eigenvalue(s) to zero")
    cov = symmetrize((V * np.clip(w, 0.0, None)) @ V.T)
    xi = rng.multivariate_normal(np.zeros(sanitization.N), cov, method='eigh', check_valid='ignore')
    return sanitization.C @ y + xi


def boundary_approximation(sanitization: Sanitization, lam: float,
                           tol: Optional[Tolerance] = None) -> Sanitization:
    """
    Pure-noise mechanism (I, Theta_lam) approaching (C, Theta) as lam -> 0.

    Per block, C_i = U diag(s) V^T; zero singular values are lifted to lam to
    get an invertible C_lam, and the suppressed output directions U0 get
    noise lam * U0 U0^T. Then Theta_lam = C_lam^-1 (Theta_i + lam U0 U0^T) C_lam^-T.
    When C is invertible the result is exact for every lam.

    Args:
        sanitization: Mechanism to approximate
        lam: Positive approximation parameter
        tol: Tolerance policy deciding which singular values are zero

    Returns:
        Sanitization: (I, Theta_lam)
    """
    if not lam > 0:
        raise InvalidInputError("lam must be positive", lam=lam)
    tol = tol or Tolerance.from_settings()
    noise_blocks = []
    for C_i, Theta_i in _blocks(sanitization):
        U, s, Vt = sla.svd(C_i)
        top = float(s[0]) if s.size else 0.0
        zero = s <= tol.rank_cutoff(C_i.shape) * top if top > 0 else np.ones_like(s, dtype=bool)
        s_lam = np.where(zero, lam, s)
        U0 = U[:, zero]
        C_lam_inv = (Vt.T / s_lam) @ U.T
        lifted = Theta_i + lam * (U0 @ U0.T)
        noise_blocks.append(symmetrize(C_lam_inv @ lifted @ C_lam_inv.T))
    return Sanitization.noise_only(block_diag_from(noise_blocks), list(sanitization.agent_dims))


def pad_blocks(C_blocks: List[np.ndarray], Theta_blocks: List[np.ndarray],
               agent_dims: List[int]) -> Sanitization:
    """
    Square sanitization from per-agent compressions with fewer rows than columns.

    Each C_i (M_i x N_i, M_i <= N_i) gets N_i - M_i zero rows and each
    Theta_i (M_i x M_i) the matching zero rows and columns.

    Args:
        C_blocks: Per-agent compressions
        Theta_blocks: Per-agent noise covariances
        agent_dims: N_i per agent

    Returns:
        Sanitization: Padded block-diagonal mechanism
    """
    if not len(C_blocks) == len(Theta_blocks) == len(agent_dims):
        raise InvalidInputError("need one C and one Theta block per agent")
    C_padded, Theta_padded = [], []
    for C_i, Theta_i, n in zip(C_blocks, Theta_blocks, agent_dims):
        C_i = np.atleast_2d(np.asarray(C_i, dtype=float))
        Theta_i = np.atleast_2d(np.asarray(Theta_i, dtype=float))
        m = C_i.shape[0]
        if C_i.shape[1] != n or m > n or Theta_i.shape != (m, m):
            raise InvalidInputError(f"block shapes {C_i.shape}/{Theta_i.shape} do not fit N_i={n}")
        C_full = np.zeros((n, n))
        C_full[:m] = C_i
        Theta_full = np.zeros((n, n))
        Theta_full[:m, :m] = Theta_i
        C_padded.append(C_full)
        Theta_padded.append(Theta_full)
    return Sanitization(C=block_diag_from(C_padded), Theta=block_diag_from(Theta_padded),
                        agent_dims=list(agent_dims))

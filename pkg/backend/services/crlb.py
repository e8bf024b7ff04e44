"""
Cramér-Rao bound evaluation for sanitized multi-agent measurements.

This module computes the baseline and perturbed CRLBs, the Psi/Phi factors
that decompose the perturbed bound, and the utility and privacy functionals
built on them.
"""

from dataclasses import dataclass
from typing import List, Optional
import logging

import numpy as np
from scipy import linalg as sla

from ..core.exceptions import (
    DegeneratePublicMapError,
    DegenerateSanitizationError,
    InvalidInputError,
    SingularModelError,
)
from ..models import CrlbFactors, PriorCase, Sanitization, SystemModel, TradeoffReport
from ..utils.linalg import Tolerance, spd_inverse, symmetrize

# Configure logging
logger = logging.getLogger(__name__)

SIGNAL_LEAK_RTOL = 1e-6


@dataclass(frozen=True)
class PerturbedCrlb:
    """
    Perturbed CRLB, possibly unbounded along some directions.

    `matrix` is the inverse of the perturbed FIM on its range; `unbounded`
    holds an orthonormal basis of the FIM's null space (empty when bounded).
    """
    matrix: np.ndarray
    unbounded: np.ndarray

    @property
    def is_bounded(self) -> bool:
        return self.unbounded.shape[1] == 0

    def weighted_trace(self, A: np.ndarray) -> float:
        """tr(A P A^T), +inf when A sees an unbounded direction."""
        if not self.is_bounded:
            leak = np.linalg.norm(A @ self.unbounded)
            if leak > SIGNAL_LEAK_RTOL * max(np.linalg.norm(A), np.finfo(float).tiny):
                return float(np.inf)
        return float(np.trace(A @ self.matrix @ A.T))

    def to_array(self) -> np.ndarray:
        """Bounded part with +inf wherever an unbounded direction contributes."""
        out = np.array(self.matrix, dtype=float)
        if not self.is_bounded:
            reach = np.abs(self.unbounded @ self.unbounded.T) > SIGNAL_LEAK_RTOL
            out[reach] = np.inf
        return out


def _chol_lower(R: np.ndarray) -> np.ndarray:
    try:
        return sla.cholesky(symmetrize(R), lower=True)
    except sla.LinAlgError:
        raise SingularModelError("R is not positive definite")


def _information(model: SystemModel) -> np.ndarray:
    Lr = _chol_lower(model.R)
    A = sla.solve_triangular(Lr, model.H, lower=True)
    return symmetrize(model.J0_matrix + A.T @ A)


def baseline_crlb(model: SystemModel) -> np.ndarray:
    """
    Baseline CRLB P_x = (J0 + H^T R^-1 H)^-1.

    Args:
        model: Validated system model

    Returns:
        np.ndarray: L x L symmetric positive definite bound
    """
    try:
        return spd_inverse(_information(model))
    except sla.LinAlgError:
        raise SingularModelError("information matrix J0 + H^T R^-1 H is singular")


def crlb_factors(model: SystemModel) -> CrlbFactors:
    """
    Baseline CRLB with the Psi and Phi factors for the model's prior case.

    No prior: Psi = P_x H^T R^-1 and Phi = R^-1 - R^-1 H P_x H^T R^-1, built
    from a QR factorization of the whitened H so that Phi H = 0 holds to
    round-off. With prior: Phi = (H P0 H^T + R)^-1 and Psi = P0 H^T Phi.

    Args:
        model: Validated system model

    Returns:
        CrlbFactors: P_x, Psi, Phi and (with prior) P0
    """
    P_x = baseline_crlb(model)
    H = model.H
    N, L = H.shape

    if model.J0 is None:
        Lr = _chol_lower(model.R)
        A = sla.solve_triangular(Lr, H, lower=True)
        Q, Rq = sla.qr(A, mode='full')
        Q1, Q_perp = Q[:, :L], Q[:, L:]
        B = sla.solve_triangular(Rq[:L, :L], Q1.T)
        Psi = sla.solve_triangular(Lr, B.T, lower=True, trans='T').T
        W = sla.solve_triangular(Lr, Q_perp, lower=True, trans='T')
        Phi = symmetrize(W @ W.T)
        return CrlbFactors(P_x=P_x, Psi=Psi, Phi=Phi, prior_case=PriorCase.NO_PRIOR)

    P0 = spd_inverse(model.J0)
    Phi = spd_inverse(H @ P0 @ H.T + model.R)
    Psi = P0 @ H.T @ Phi
    return CrlbFactors(P_x=P_x, Psi=Psi, Phi=Phi, prior_case=PriorCase.WITH_PRIOR, P0=P0)


def _check_sanitization(model: SystemModel, sanitization: Sanitization) -> None:
    if list(sanitization.agent_dims) != list(model.agent_dims):
        raise InvalidInputError("sanitization blocks do not match the model's agent_dims",
                                model=model.agent_dims, sanitization=sanitization.agent_dims)


def perturbed_fim(model: SystemModel, sanitization: Sanitization,
                  tol: Optional[Tolerance] = None) -> np.ndarray:
    """
    Perturbed FIM J0 + H^T C^T (C R C^T + Theta)^+ C H.

    Directions where C R C^T + Theta vanishes carry identically zero
    measurements and are dropped, which makes zero-row padding of C exact.

    Args:
        model: System model
        sanitization: (C, Theta)
        tol: Tolerance policy

    Returns:
        np.ndarray: L x L PSD information matrix
    """
    tol = tol or Tolerance.from_settings()
    _check_sanitization(model, sanitization)
    C, Theta = sanitization.C, sanitization.Theta
    CH = C @ model.H
    M = symmetrize(C @ model.R @ C.T + Theta)
    if not np.all(np.isfinite(M)):
        raise DegenerateSanitizationError("C R C^T + Theta has non-finite entries")

    w, V = sla.eigh(M)
    top = max(w[-1], 0.0) if w.size else 0.0
    keep = w > tol.rank_cutoff(M.shape) * top if top > 0 else np.zeros_like(w, dtype=bool)

    dropped = V[:, ~keep]
    if dropped.size:
        leak = np.linalg.norm(dropped.T @ CH)
        if leak > SIGNAL_LEAK_RTOL * max(np.linalg.norm(CH), np.finfo(float).tiny):
            raise DegenerateSanitizationError(
                "C R C^T + Theta is singular along directions that carry signal", leak=leak
            )
        logger.debug(f"Dropped {dropped.shape[1]} null measurement directions")

    A = (V[:, keep] / np.sqrt(w[keep])).T @ CH
    return symmetrize(model.J0_matrix + A.T @ A)


def perturbed_crlb(model: SystemModel, sanitization: Sanitization,
                   tol: Optional[Tolerance] = None) -> PerturbedCrlb:
    """
    Perturbed CRLB (J0 + H^T C^T (C R C^T + Theta)^-1 C H)^-1.

    Args:
        model: System model
        sanitization: (C, Theta)
        tol: Tolerance policy

    Returns:
        PerturbedCrlb: Bound, with the unbounded directions when the
        sanitization destroys information (no prior only)
    """
    tol = tol or Tolerance.from_settings()
    J = perturbed_fim(model, sanitization, tol)
    L = J.shape[0]
    w, V = sla.eigh(J)
    top = max(w[-1], 0.0)
    bounded = w > tol.rank_cutoff(J.shape) * top if top > 0 else np.zeros_like(w, dtype=bool)
    if np.all(bounded):
        try:
            return PerturbedCrlb(matrix=spd_inverse(J), unbounded=np.zeros((L, 0)))
        except sla.LinAlgError:
            pass

    Vb = V[:, bounded]
    matrix = symmetrize((Vb / w[bounded]) @ Vb.T)
    logger.info(f"Perturbed CRLB unbounded along {int(np.sum(~bounded))} direction(s)")
    return PerturbedCrlb(matrix=matrix, unbounded=V[:, ~bounded])


def perturbed_crlb_decomposed(model: SystemModel, Theta: np.ndarray,
                              factors: Optional[CrlbFactors] = None) -> np.ndarray:
    """
    Perturbed CRLB for C = I as P_x + Psi (I + Theta Phi)^-1 Theta Psi^T.

    Args:
        model: System model
        Theta: Block-diagonal PSD noise covariance
        factors: Precomputed factors of the model

    Returns:
        np.ndarray: L x L perturbed CRLB
    """
    factors = factors or crlb_factors(model)
    Theta = symmetrize(np.asarray(Theta, dtype=float))
    N = Theta.shape[0]
    X = sla.solve(np.eye(N) + Theta @ factors.Phi, Theta)
    return symmetrize(factors.P_x + factors.Psi @ X @ factors.Psi.T)


def perturbed_crlb_from_precision(factors: CrlbFactors, theta_bar: np.ndarray) -> np.ndarray:
    """
    Perturbed CRLB for noise Theta = theta_bar^-1, i.e. P_x + Psi (theta_bar + Phi)^-1 Psi^T.

    Args:
        factors: Model factors
        theta_bar: Positive definite inverse noise covariance

    Returns:
        np.ndarray: L x L perturbed CRLB
    """
    K = sla.cho_factor(symmetrize(theta_bar + factors.Phi))
    return symmetrize(factors.P_x + factors.Psi @ sla.cho_solve(K, factors.Psi.T))


def utility_norm(model: SystemModel, P_x: np.ndarray) -> float:
    norm = float(np.trace(model.U @ P_x @ model.U.T))
    if norm <= 0:
        raise DegeneratePublicMapError("tr(U P_x U^T) is zero; the public map carries no variance")
    return norm


def _utility_from(model: SystemModel, P_x: np.ndarray, P_tilde: PerturbedCrlb) -> float:
    norm = utility_norm(model, P_x)
    return float(1.0 - P_tilde.weighted_trace(model.U) / norm)


def _privacy_from(model: SystemModel, P_x: np.ndarray, P_tilde: PerturbedCrlb, i: int) -> float:
    G = model.G[i - 1]
    if not np.any(G):
        return 0.0
    norm = float(np.trace(G @ P_x @ G.T))
    return float(P_tilde.weighted_trace(G) / norm - 1.0)


def utility(model: SystemModel, sanitization: Sanitization) -> float:
    """
    Utility u = 1 - tr(U P~ U^T) / tr(U P_x U^T).

    Args:
        model: System model
        sanitization: (C, Theta)

    Returns:
        float: Utility, at most 0 up to round-off; -inf when destroyed
    """
    return _utility_from(model, baseline_crlb(model), perturbed_crlb(model, sanitization))


def privacy(model: SystemModel, sanitization: Sanitization, i: int) -> float:
    """
    Privacy p_i = tr(G_i P~ G_i^T) / tr(G_i P_x G_i^T) - 1; 0 for G_i = 0.

    Args:
        model: System model
        sanitization: (C, Theta)
        i: Agent number, 1..S

    Returns:
        float: Privacy of agent i
    """
    if not 1 <= i <= model.S:
        raise InvalidInputError(f"agent index {i} outside 1..{model.S}")
    return _privacy_from(model, baseline_crlb(model), perturbed_crlb(model, sanitization), i)


def eps_max(model: SystemModel, i: int) -> float:
    """
    Supremum of attainable privacy for agent i.

    Args:
        model: System model
        i: Agent number, 1..S

    Returns:
        float: tr(G_i J0^-1 G_i^T)/tr(G_i P_x G_i^T) - 1 with prior, +inf
        without, 0 when G_i = 0
    """
    if not 1 <= i <= model.S:
        raise InvalidInputError(f"agent index {i} outside 1..{model.S}")
    G = model.G[i - 1]
    if not np.any(G):
        return 0.0
    if model.J0 is None:
        return float(np.inf)
    P_x = baseline_crlb(model)
    P0 = spd_inverse(model.J0)
    return float(np.trace(G @ P0 @ G.T) / np.trace(G @ P_x @ G.T) - 1.0)


def eps_max_all(model: SystemModel) -> List[float]:
    """eps_max for every agent."""
    return [eps_max(model, i) for i in range(1, model.S + 1)]


def tradeoff_report(model: SystemModel, sanitization: Sanitization) -> TradeoffReport:
    """
    Utility, privacies and bounds of a sanitization in one pass.

    Args:
        model: System model
        sanitization: (C, Theta)

    Returns:
        TradeoffReport: Aggregated evaluation
    """
    P_x = baseline_crlb(model)
    P_tilde = perturbed_crlb(model, sanitization)
    report = TradeoffReport(
        utility=_utility_from(model, P_x, P_tilde),
        privacy=[_privacy_from(model, P_x, P_tilde, i) for i in range(1, model.S + 1)],
        P_x=P_x,
        P_tilde=P_tilde.to_array(),
        eps_max=eps_max_all(model)
    )
    logger.debug(f"Tradeoff report: u={report.utility:.6g}, p={report.privacy}")
    return report

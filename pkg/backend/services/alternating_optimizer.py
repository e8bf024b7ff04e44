"""
Alternating per-agent optimization of the utility-privacy tradeoff.

Noise is handled through its inverse theta_bar = (Theta + mu I)^-1. Holding
the other agents fixed, utility and privacy are affine in
Z = (theta_bar_i + Omega)^-1, so each agent's block is a small SDP; agents are
swept in order until the utility stops improving.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
from scipy import linalg as sla

from ..core.config import get_settings
from ..core.exceptions import (
    InfeasibleThresholdsError,
    InvalidInputError,
    SanitizationDesignError,
    ThresholdAboveMaximumError,
)
from ..models import (
    AltOptTrace,
    BlockTerms,
    CrlbFactors,
    FunctionalTerm,
    LinearConstraint,
    LinearFunctional,
    LmiConstraint,
    LmiTerm,
    PrivacyRequest,
    Sanitization,
    SdpProblem,
    SdpStatus,
    Sense,
    SystemModel,
    TraceRow,
    VariableBlock,
)
from ..utils.linalg import block_diag_from, psd_sqrt, rank_tol, symmetrize
from .crlb import crlb_factors, eps_max_all, perturbed_crlb_from_precision, utility_norm
from .sdp_solver import solve_sdp

# Configure logging
logger = logging.getLogger(__name__)

PRIVACY_ATOL = 1e-6
SECONDARY_SLACK = 1e-9


@dataclass(frozen=True)
class PermutedSystem:
    """Model with agent i's measurements moved first, and its factors."""
    agent_index: int
    order: np.ndarray
    model: SystemModel
    factors: CrlbFactors


@dataclass(frozen=True)
class NoiseBounds:
    """Floor mu of the noise and the bounds of the inverse noise."""
    mu: float
    theta_cap: float

    @property
    def nu(self) -> float:
        """Smallest inverse-noise eigenvalue, i.e. noise theta_cap."""
        return 1.0 / (self.theta_cap + self.mu)

    @property
    def top(self) -> float:
        """Largest inverse-noise eigenvalue, i.e. zero noise."""
        return 1.0 / self.mu

    @classmethod
    def for_model(cls, model: SystemModel) -> 'NoiseBounds':
        settings = get_settings()
        scale = float(np.trace(model.R)) / model.N
        return cls(mu=settings.altopt_noise_floor_scale * scale,
                   theta_cap=settings.altopt_noise_cap_scale * scale)


def permute_for_agent(model: SystemModel, i: int) -> PermutedSystem:
    """
    Reorder measurements so agent i comes first, others keeping their order.

    Args:
        model: System model
        i: Agent number, 1..S

    Returns:
        PermutedSystem: Permutation, permuted model and its recomputed factors
    """
    if not 1 <= i <= model.S:
        raise InvalidInputError(f"agent index {i} outside 1..{model.S}")
    slices = model.slices()
    order_agents = [i] + [k for k in range(1, model.S + 1) if k != i]
    order = np.concatenate([np.arange(slices[k - 1].start, slices[k - 1].stop) for k in order_agents])
    permuted = SystemModel(
        agent_dims=[model.agent_dims[k - 1] for k in order_agents],
        H=model.H[order],
        R=model.R[np.ix_(order, order)],
        J0=model.J0,
        U=model.U,
        G=[model.G[k - 1] for k in order_agents]
    )
    return PermutedSystem(agent_index=i, order=order, model=permuted, factors=crlb_factors(permuted))


def block_terms(model: SystemModel, i: int, theta_bar_others: Sequence[np.ndarray],
                permuted: Optional[PermutedSystem] = None) -> BlockTerms:
    """
    Constants of agent i's block problem given the other agents' inverse noise.

    With Z = (theta_bar_i + Omega)^-1, utility is
    -tr(Gamma_u Z)/tr(U P_x U^T) - Delta_u and the privacy of map j is
    tr(Gamma_p[j] Z)/tr(G_j P_x G_j^T) + Delta_p[j].

    Args:
        model: System model
        i: Agent number, 1..S
        theta_bar_others: Inverse-noise blocks of the other agents, in agent order
        permuted: Precomputed permute_for_agent(model, i)

    Returns:
        BlockTerms: Gamma, Omega, Delta and T of the block
    """
    permuted = permuted or permute_for_agent(model, i)
    if len(theta_bar_others) != model.S - 1:
        raise InvalidInputError(f"expected {model.S - 1} inverse-noise blocks, got {len(theta_bar_others)}")
    factors = permuted.factors
    n = model.agent_dims[i - 1]
    Psi, Phi = factors.Psi, factors.Phi
    Psi_a, Psi_b = Psi[:, :n], Psi[:, n:]
    Phi_11, Phi_12, Phi_22 = Phi[:n, :n], Phi[:n, n:], Phi[n:, n:]

    regularized = False
    if model.S > 1:
        block = symmetrize(block_diag_from(theta_bar_others) + Phi_22)
        try:
            T = sla.cho_solve(sla.cho_factor(block), np.eye(block.shape[0]))
        except sla.LinAlgError:
            shift = NoiseBounds.for_model(model).nu
            logger.warning(f"Agent {i}: others' inverse-noise block is singular; adding {shift:.3e} I")
            T = sla.solve(block + shift * np.eye(block.shape[0]), np.eye(block.shape[0]), assume_a='pos')
            regularized = True
        T = symmetrize(T)
    else:
        T = np.zeros((0, 0))

    Omega = symmetrize(Phi_11 - Phi_12 @ T @ Phi_12.T)
    E = Psi_a - Psi_b @ T @ Phi_12.T
    spill = Psi_b @ T @ Psi_b.T

    P_x = factors.P_x
    norm_u = utility_norm(model, P_x)
    UE = model.U @ E
    Gamma_p, Delta_p, norms = [], [], []
    for G in model.G:
        norm = float(np.trace(G @ P_x @ G.T)) if np.any(G) else 0.0
        GE = G @ E
        Gamma_p.append(symmetrize(GE.T @ GE))
        Delta_p.append(float(np.trace(G @ spill @ G.T)) / norm if norm > 0 else 0.0)
        norms.append(norm)

    return BlockTerms(
        agent_index=i,
        Gamma_u=symmetrize(UE.T @ UE),
        Gamma_p=Gamma_p,
        Omega=Omega,
        Delta_u=float(np.trace(model.U @ spill @ model.U.T)) / norm_u,
        Delta_p=Delta_p,
        T=T,
        utility_norm=norm_u,
        privacy_norms=norms,
        regularized=regularized
    )


def block_utility(terms: BlockTerms, theta_bar_i: np.ndarray) -> float:
    """Utility as a function of agent i's inverse noise."""
    Z = sla.solve(symmetrize(theta_bar_i + terms.Omega), np.eye(terms.Omega.shape[0]), assume_a='pos')
    return float(-np.sum(terms.Gamma_u * Z) / terms.utility_norm - terms.Delta_u)


def block_privacy(terms: BlockTerms, theta_bar_i: np.ndarray) -> List[float]:
    """Privacy of every private map as a function of agent i's inverse noise."""
    Z = sla.solve(symmetrize(theta_bar_i + terms.Omega), np.eye(terms.Omega.shape[0]), assume_a='pos')
    return [float(np.sum(g * Z) / norm + d) if norm > 0 else 0.0
            for g, d, norm in zip(terms.Gamma_p, terms.Delta_p, terms.privacy_norms)]


@dataclass
class BlockSolve:
    """Outcome of one agent-block solve."""
    theta_bar: Optional[np.ndarray]
    status: str


class AlternatingOptimizer:
    """
    Block-coordinate maximization of utility under per-agent privacy thresholds.
    """

    def __init__(self):
        """Initialize the alternating optimizer."""
        logger.info("Alternating optimizer initialized")

    def _block_problem(self, terms: BlockTerms, B_half: np.ndarray, eps: Sequence[float]):
        n = terms.Omega.shape[0]
        cost = symmetrize(B_half @ terms.Gamma_u @ B_half) / terms.utility_norm
        gains, constraints = [], []
        for j, (g, d, norm, e) in enumerate(zip(terms.Gamma_p, terms.Delta_p, terms.privacy_norms, eps), start=1):
            if norm <= 0:
                continue
            gain = symmetrize(B_half @ g @ B_half) / norm
            gains.append(gain)
            if e - d > 0:
                constraints.append((j, gain, e - d))
        return n, cost, gains, constraints

    def _sdp(self, n: int, objective: np.ndarray, sense: Sense,
             lower_bounds: List[Tuple[np.ndarray, float, str]], name: str):
        inequalities = [
            LinearConstraint(functional=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=-coeff)]),
                             rhs=-bound, name=label)
            for coeff, bound, label in lower_bounds
        ]
        problem = SdpProblem(
            blocks=[VariableBlock(dim=n, name="Y")],
            objective=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=objective)]),
            sense=sense,
            inequality_constraints=inequalities,
            lmi_constraints=[LmiConstraint(constant=np.eye(n),
                                           terms=[LmiTerm(block=0, left=np.eye(n), sign=-1.0)],
                                           name="Y_below_identity")],
            name=name
        )
        return solve_sdp(problem)

    def solve_agent_block(self, model: SystemModel, i: int, theta_bar_others: Sequence[np.ndarray],
                          request: PrivacyRequest, terms: Optional[BlockTerms] = None,
                          bounds: Optional[NoiseBounds] = None) -> BlockSolve:
        """
        Utility-optimal inverse noise of agent i subject to all privacy thresholds.

        Solves min tr(Gamma_u Z) s.t. tr(Gamma_p[j] Z) >= eps'_j with
        Z = B^1/2 Y B^1/2, 0 <= Y <= I and B = (Omega + nu I)^-1. When
        Gamma_u leaves directions free, a second solve spends them on privacy.

        Args:
            model: System model
            i: Agent number, 1..S
            theta_bar_others: Inverse-noise blocks of the other agents
            request: Privacy thresholds
            terms: Precomputed block_terms
            bounds: Noise floor and cap

        Returns:
            BlockSolve: New inverse-noise block (None when infeasible or failed)
        """
        eps = request.for_model(model).eps
        bounds = bounds or NoiseBounds.for_model(model)
        terms = terms or block_terms(model, i, theta_bar_others)
        B = sla.solve(terms.Omega + bounds.nu * np.eye(terms.Omega.shape[0]), np.eye(terms.Omega.shape[0]),
                      assume_a='pos')
        B_half = psd_sqrt(B)
        n, cost, gains, constraints = self._block_problem(terms, B_half, eps)

        # Y = I is the most private point of the block.
        short = [j for j, gain, bound in constraints if np.trace(gain) < bound * (1.0 - 1e-12)]
        if short:
            logger.debug(f"Agent {i}: thresholds of maps {short} unreachable in this block")
            return BlockSolve(theta_bar=None, status="infeasible")

        lower = [(gain, bound, f"privacy_{j}") for j, gain, bound in constraints]
        if lower:
            primary = self._sdp(n, cost, Sense.MINIMIZE, lower, f"altopt_block_{i}")
            if not primary.status.usable:
                status = "infeasible" if primary.status == SdpStatus.INFEASIBLE else "solver-failure"
                return BlockSolve(theta_bar=None, status=status)
            Y, best = primary.blocks[0], primary.objective_value
        else:
            Y, best = np.zeros((n, n)), 0.0

        status = "accepted"
        if gains and rank_tol(cost) < n:
            harvest = symmetrize(sum(gains))
            ceiling = (-cost, -(best + SECONDARY_SLACK * (1.0 + abs(best))), "utility_ceiling")
            secondary = self._sdp(n, harvest, Sense.MAXIMIZE, lower + [ceiling], f"altopt_block_{i}_tiebreak")
            if secondary.status.usable:
                Y = secondary.blocks[0]
            else:
                logger.debug(f"Agent {i}: tie-break solve ended with {secondary.status.value}")

        return BlockSolve(theta_bar=self._recover(B_half @ Y @ B_half, terms.Omega, bounds), status=status)

    @staticmethod
    def _recover(Z: np.ndarray, Omega: np.ndarray, bounds: NoiseBounds) -> np.ndarray:
        """theta_bar = Z^-1 - Omega with eigenvalues clamped to [nu, 1/mu]."""
        z, V = sla.eigh(symmetrize(Z))
        floor = 1.0 / (bounds.top + max(sla.norm(Omega, 2), 0.0))
        z = np.maximum(z, floor)
        X = symmetrize((V / z) @ V.T - Omega)
        w, Q = sla.eigh(X)
        return symmetrize((Q * np.clip(w, bounds.nu, bounds.top)) @ Q.T)

    @staticmethod
    def noise_from_precision(blocks: Sequence[np.ndarray], bounds: NoiseBounds) -> np.ndarray:
        """Theta = theta_bar^-1 - mu I per block, exactly zero where theta_bar sits at 1/mu."""
        out = []
        for block in blocks:
            w, Q = sla.eigh(symmetrize(block))
            theta = np.where(w >= bounds.top * (1.0 - 1e-9), 0.0, 1.0 / w - bounds.mu)
            out.append(symmetrize((Q * np.clip(theta, 0.0, None)) @ Q.T))
        return block_diag_from(out)

    def _evaluate(self, model: SystemModel, factors: CrlbFactors,
                  blocks: Sequence[np.ndarray]) -> Tuple[float, List[float]]:
        P_tilde = perturbed_crlb_from_precision(factors, block_diag_from(blocks))
        u = 1.0 - float(np.trace(model.U @ P_tilde @ model.U.T)) / utility_norm(model, factors.P_x)
        p = [float(np.trace(G @ P_tilde @ G.T) / np.trace(G @ factors.P_x @ G.T) - 1.0) if np.any(G) else 0.0
             for G in model.G]
        return u, p

    def optimize(self, model: SystemModel, request: PrivacyRequest,
                 max_iters: Optional[int] = None) -> Tuple[Sanitization, AltOptTrace]:
        """
        Sweep agents 1..S, solving each block with the others fixed.

        Starts from the largest representable noise, stops after max_iters
        sweeps or when a sweep changes utility by less than the stop tolerance.
        A block result is kept only if utility does not drop and every
        threshold still holds; otherwise the previous block stays.

        Args:
            model: System model
            request: Privacy thresholds
            max_iters: Maximum number of sweeps

        Returns:
            Tuple[Sanitization, AltOptTrace]: Final (I, Theta) and the trace
        """
        settings = get_settings()
        max_iters = max_iters if max_iters is not None else settings.altopt_max_iters
        stop_tol = settings.altopt_stop_tol
        eps = request.for_model(model).eps

        try:
            for j, (e, m) in enumerate(zip(eps, eps_max_all(model)), start=1):
                if e > 0 and e >= m:
                    raise ThresholdAboveMaximumError(f"eps_{j}={e:g} is not below eps_max={m:.6g}",
                                                     agent_index=j, eps=e, eps_max=m)

            factors = crlb_factors(model)
            bounds = NoiseBounds.for_model(model)
            blocks = [bounds.nu * np.eye(n) for n in model.agent_dims]
            u, p = self._evaluate(model, factors, blocks)
            trace = AltOptTrace(rows=[TraceRow(iteration=0, agent=0, utility=u, privacy=p, status="initial")])
            permutations = [permute_for_agent(model, i) for i in range(1, model.S + 1)]

            def meets(values: List[float]) -> bool:
                return all(v >= e - PRIVACY_ATOL * max(1.0, e) for v, e in zip(values, eps))

            previous_end = u
            for sweep in range(1, max_iters + 1):
                for i in range(1, model.S + 1):
                    others = [b for k, b in enumerate(blocks, start=1) if k != i]
                    terms = block_terms(model, i, others, permutations[i - 1])
                    result = self.solve_agent_block(model, i, others, request, terms, bounds)

                    status = result.status
                    if result.theta_bar is None:
                        if sweep == 1 and status == "infeasible" and not meets(p):
                            raise InfeasibleThresholdsError(
                                f"privacy thresholds unreachable at agent {i} in the first sweep",
                                agent_index=i, eps=eps, privacy=p
                            )
                    else:
                        candidate = list(blocks)
                        candidate[i - 1] = result.theta_bar
                        u_new, p_new = self._evaluate(model, factors, candidate)
                        if meets(p_new) and (u_new >= u - stop_tol or not meets(p)):
                            blocks, u, p = candidate, u_new, p_new
                        else:
                            status = "rejected"
                            logger.debug(f"Sweep {sweep}, agent {i}: rejected u={u_new:.6g}, p={p_new}")
                    trace.rows.append(TraceRow(iteration=sweep, agent=i, utility=u, privacy=p, status=status))

                trace.sweeps = sweep
                logger.info(f"Sweep {sweep}: u={u:.6g}, p={[round(v, 6) for v in p]}")
                if abs(u - previous_end) < stop_tol:
                    trace.converged = True
                    break
                previous_end = u

            Theta = self.noise_from_precision(blocks, bounds)
            sanitization = Sanitization.noise_only(Theta, list(model.agent_dims))
            if not meets(p):
                logger.warning(f"Final privacies {p} fall short of {eps}")
            return sanitization, trace

        except SanitizationDesignError:
            raise
        except Exception as e:
            logger.error(f"Alternating optimization failed: {e}")
            raise


# Global alternating optimizer instance
_alternating_optimizer_instance: Optional[AlternatingOptimizer] = None


def get_alternating_optimizer() -> AlternatingOptimizer:
    """
    Get the global alternating optimizer instance.

    Returns:
        AlternatingOptimizer: Global alternating optimizer instance
    """
    global _alternating_optimizer_instance
    if _alternating_optimizer_instance is None:
        _alternating_optimizer_instance = AlternatingOptimizer()
    return _alternating_optimizer_instance


def solve_agent_block(model: SystemModel, i: int, theta_bar_others: Sequence[np.ndarray],
                      request: PrivacyRequest) -> BlockSolve:
    return get_alternating_optimizer().solve_agent_block(model, i, theta_bar_others, request)


def alternating_optimize(model: SystemModel, request: PrivacyRequest,
                         max_iters: Optional[int] = None) -> Tuple[Sanitization, AltOptTrace]:
    return get_alternating_optimizer().optimize(model, request, max_iters)


def write_trace_csv(trace: AltOptTrace, path: Union[str, Path]) -> Path:
    """
    Write the trace table (iteration, agent, utility, p_1..p_S, status).

    Args:
        trace: Optimizer trace
        path: Destination file

    Returns:
        Path: The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace.to_frame().to_csv(path, index=False)
    return path

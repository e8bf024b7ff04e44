"""
Arbitrarily strong utility-privacy tradeoff (ASUP) engine.

This module decides whether perfect utility can be combined with privacy
beyond any threshold, and constructs the noise covariances that achieve it,
for both the no-prior and the with-prior case.
"""

from typing import Callable, List, Optional, Tuple
import logging

import numpy as np
from scipy import linalg as sla

from ..core.config import get_settings
from ..core.exceptions import (
    ConditionsNotMetError,
    InfeasibleError,
    InvalidInputError,
    LambdaCapExceededError,
    SanitizationDesignError,
    ThresholdAboveMaximumError,
    UnsupportedCaseError,
    WrongCaseError,
)
from ..models import (
    AgentDiagnostics,
    AsupVerdict,
    ConstructionResult,
    CrlbFactors,
    PriorCase,
    PrivacyRequest,
    PrivateMapVerdict,
    Sanitization,
    SystemModel,
)
from ..utils.linalg import OrthonormalBasis, Tolerance, block_diag_from, null_basis, row_basis
from .crlb import crlb_factors, eps_max_all, perturbed_crlb_decomposed, tradeoff_report

# Configure logging
logger = logging.getLogger(__name__)

STRATEGIES = ('witness', 'own-agent')
UTILITY_ATOL = 1e-9


def _require_case(model: SystemModel, case: PriorCase, operation: str) -> None:
    if model.prior_case != case:
        raise WrongCaseError(f"{operation} needs a {case.value} model, got {model.prior_case.value}",
                             operation=operation)


def _dominant_direction(M: np.ndarray, W: OrthonormalBasis) -> Tuple[np.ndarray, float]:
    """Unit vector in span(W) maximizing ||M v||, with its gain."""
    MW = M @ W.vectors
    _, s, vh = sla.svd(MW, full_matrices=False)
    v = W.vectors @ vh[0]
    pivot = np.argmax(np.abs(v))
    if v[pivot] < 0:
        v = -v
    return v, float(s[0])


class AsupEngine:
    """
    Checker and constructor for the arbitrarily strong utility-privacy tradeoff.

    Without prior the tradeoff hinges on each agent's Xi matrix; with prior it
    hinges on the residuals U Psi_i H_i P0 G^T.
    """

    def __init__(self):
        """Initialize the ASUP engine."""
        logger.info("ASUP engine initialized")

    # Checkers

    def xi_matrix(self, model: SystemModel, i: int, factors: Optional[CrlbFactors] = None) -> np.ndarray:
        """
        Xi_i = [U Psi_{:,S_i}; Phi_{S_i,S_i}] of agent i (no prior).

        Args:
            model: No-prior system model
            i: Agent number, 1..S
            factors: Precomputed factors of the model

        Returns:
            np.ndarray: (U_dim + N_i) x N_i matrix
        """
        _require_case(model, PriorCase.NO_PRIOR, "xi_matrix")
        factors = factors or crlb_factors(model)
        rows = model.slices()[i - 1].slice
        return np.vstack([model.U @ factors.Psi[:, rows], factors.Phi[rows, rows]])

    def check_no_prior(self, model: SystemModel, tol: Optional[float] = None) -> AsupVerdict:
        """
        Decide ASUP for a no-prior model.

        Agent i witnesses G_j when Xi_i has a nontrivial null space that is
        not contained in Null(G_j Psi_{:,S_i}).

        Args:
            model: No-prior system model
            tol: Relative tolerance for ranks and the containment test

        Returns:
            AsupVerdict: Witnesses per nonzero private map
        """
        _require_case(model, PriorCase.NO_PRIOR, "check_asup_no_prior")
        tol = tol if tol is not None else get_settings().asup_tol
        rank_policy = Tolerance(rel_rank_tol=tol)
        factors = crlb_factors(model)

        agents, null_spaces = [], []
        for agent in model.slices():
            xi = self.xi_matrix(model, agent.agent_index, factors)
            W = null_basis(xi, rank_policy)
            null_spaces.append(W)
            agents.append(AgentDiagnostics(
                agent_index=agent.agent_index,
                xi_rank=agent.size - W.dim,
                null_dim=W.dim
            ))

        per_private = []
        for j, G_j in enumerate(model.G, start=1):
            if not np.any(G_j):
                continue
            witnesses = [
                agent.agent_index for agent, W in zip(model.slices(), null_spaces)
                if self._witnesses(G_j @ factors.Psi[:, agent.slice], W, tol)
            ]
            per_private.append(PrivateMapVerdict(private_index=j, witnesses=witnesses))

        verdict = AsupVerdict(
            achievable=all(p.achievable for p in per_private),
            prior_case=PriorCase.NO_PRIOR,
            tol=tol,
            per_private=per_private,
            agents=agents
        )
        logger.info(f"ASUP (no prior): achievable={verdict.achievable}, "
                    f"witnesses={[p.witnesses for p in per_private]}")
        return verdict

    @staticmethod
    def _witnesses(M: np.ndarray, W: OrthonormalBasis, tol: float) -> bool:
        if W.is_empty:
            return False
        scale = sla.norm(M, 2)
        if scale == 0:
            return False
        return bool(sla.norm(M @ W.vectors, 2) > tol * scale)

    def check_with_prior(self, model: SystemModel, tol: Optional[float] = None) -> AsupVerdict:
        """
        Decide ASUP for a model with prior: every residual U Psi_i H_i P0 G^T must vanish.

        Args:
            model: With-prior system model
            tol: Relative tolerance scaled by the product of the factor norms

        Returns:
            AsupVerdict: Residual per agent
        """
        _require_case(model, PriorCase.WITH_PRIOR, "check_asup_with_prior")
        tol = tol if tol is not None else get_settings().asup_tol
        factors = crlb_factors(model)
        G = model.G_stacked
        base = sla.norm(model.U, 2) * sla.norm(factors.Psi, 2) * sla.norm(factors.P0, 2) * sla.norm(G, 2)

        residuals, agents = [], []
        for agent in model.slices():
            H_i = model.H[agent.slice]
            residual = float(sla.norm(model.U @ factors.Psi[:, agent.slice] @ H_i @ factors.P0 @ G.T))
            threshold = float(tol * base * sla.norm(H_i, 2))
            residuals.append(residual)
            agents.append(AgentDiagnostics(agent_index=agent.agent_index, residual=residual, threshold=threshold))

        verdict = AsupVerdict(
            achievable=all(a.residual <= a.threshold for a in agents),
            prior_case=PriorCase.WITH_PRIOR,
            tol=tol,
            residuals=residuals,
            agents=agents
        )
        logger.info(f"ASUP (with prior): achievable={verdict.achievable}, max residual={max(residuals):.3e}")
        return verdict

    def check(self, model: SystemModel, tol: Optional[float] = None) -> AsupVerdict:
        """Dispatch to the checker of the model's prior case."""
        if model.has_prior:
            return self.check_with_prior(model, tol)
        return self.check_no_prior(model, tol)

    # Constructions

    def _smallest_scale(self, meets: Callable[[float], bool], cap: float, what: str) -> float:
        """Smallest lambda <= cap with meets(lambda), by doubling from min(1, cap) then bisection."""
        settings = get_settings()
        lo, hi = 0.0, min(1.0, cap)
        while not meets(hi):
            if hi >= cap:
                raise LambdaCapExceededError(f"{what}: threshold not reached with noise scale {cap:g}",
                                             lambda_cap=cap)
            lo, hi = hi, min(2.0 * hi, cap)
        for _ in range(settings.lambda_bisect_steps):
            if hi - lo <= settings.lambda_rel_precision * hi:
                break
            mid = 0.5 * (lo + hi)
            if meets(mid):
                hi = mid
            else:
                lo = mid
        return hi

    def _privacy_fn(self, model: SystemModel, factors: CrlbFactors, j: int) -> Callable[[np.ndarray], float]:
        G = model.G[j - 1]
        norm = float(np.trace(G @ factors.P_x @ G.T))

        def privacy_of(Theta: np.ndarray) -> float:
            P_tilde = perturbed_crlb_decomposed(model, Theta, factors)
            return float(np.trace(G @ P_tilde @ G.T) / norm - 1.0)

        return privacy_of

    def _embed(self, model: SystemModel, i: int, block: np.ndarray) -> np.ndarray:
        blocks = [np.zeros((n, n)) for n in model.agent_dims]
        blocks[i - 1] = block
        return block_diag_from(blocks)

    def _verify(self, model: SystemModel, sanitization: Sanitization, eps: List[float]) -> None:
        report = tradeoff_report(model, sanitization)
        short = [j + 1 for j, (p, e) in enumerate(zip(report.privacy, eps))
                 if p < e - UTILITY_ATOL * max(1.0, e)]
        if report.utility < -UTILITY_ATOL or short:
            logger.error(f"Constructed sanitization failed verification: u={report.utility:.3e}, short={short}")
            raise InfeasibleError("constructed sanitization does not meet the thresholds",
                                  utility=report.utility, agents=short)

    def construct_no_prior(self, model: SystemModel, request: PrivacyRequest,
                           lambda_cap: Optional[float] = None, strategy: str = 'witness') -> ConstructionResult:
        """
        Perfect-utility noise meeting every privacy threshold (no prior).

        For each private map with a positive threshold, a witness agent adds
        rank-one noise lambda v v^T along the direction of its Xi null space
        that G_j Psi amplifies most. The per-map noises are summed and the
        result re-verified through the direct CRLB.

        Args:
            model: No-prior system model
            request: Privacy thresholds, one per agent
            lambda_cap: Largest noise scale tried
            strategy: 'witness' lets any witness hide G_j; 'own-agent'
                requires agent j itself to witness G_j

        Returns:
            ConstructionResult: (I, Theta) with per-map diagnostics
        """
        _require_case(model, PriorCase.NO_PRIOR, "construct_no_prior")
        if strategy not in STRATEGIES:
            raise InvalidInputError(f"strategy must be one of {STRATEGIES}", strategy=strategy)
        eps = request.for_model(model).eps
        cap = lambda_cap if lambda_cap is not None else get_settings().lambda_cap

        try:
            verdict = self.check_no_prior(model)
            factors = crlb_factors(model)
            tol = verdict.tol
            rank_policy = Tolerance(rel_rank_tol=tol)
            witnesses = {v.private_index: v.witnesses for v in verdict.per_private}

            Theta = np.zeros((model.N, model.N))
            diagnostics = []
            for j, e in enumerate(eps, start=1):
                if e == 0:
                    continue
                if not np.any(model.G[j - 1]):
                    raise ThresholdAboveMaximumError(
                        f"agent {j} has a zero private map; only eps=0 is attainable", agent_index=j, eps=e
                    )
                candidates = witnesses.get(j, [])
                if strategy == 'own-agent':
                    candidates = [j] if j in candidates else []
                if not candidates:
                    raise ConditionsNotMetError(f"no agent can hide private map {j} at perfect utility",
                                                private_index=j, strategy=strategy)

                best = None
                for i in candidates:
                    rows = model.slices()[i - 1].slice
                    W = null_basis(self.xi_matrix(model, i, factors), rank_policy)
                    v, gain = _dominant_direction(model.G[j - 1] @ factors.Psi[:, rows], W)
                    if best is None or gain > best[2]:
                        best = (i, v, gain)
                i, v, _ = best

                direction = self._embed(model, i, np.outer(v, v))
                privacy_of = self._privacy_fn(model, factors, j)
                lam = self._smallest_scale(lambda s: privacy_of(s * direction) >= e, cap, f"private map {j}")
                Theta += lam * direction
                diagnostics.append(AgentDiagnostics(
                    agent_index=i, private_index=j, chosen_vector=v.tolist(), noise_scale=lam
                ))
                logger.debug(f"Private map {j}: agent {i} adds noise scale {lam:.6g}")

            sanitization = Sanitization.noise_only(Theta, list(model.agent_dims))
            self._verify(model, sanitization, eps)
            logger.info(f"Constructed no-prior ASUP sanitization ({strategy}) for eps={eps}")
            return ConstructionResult(sanitization=sanitization, agents=diagnostics)

        except SanitizationDesignError:
            raise
        except Exception as e:
            logger.error(f"No-prior construction failed: {e}")
            raise

    def construct_with_prior(self, model: SystemModel, request: PrivacyRequest,
                             lambda_cap: Optional[float] = None, partial: bool = False) -> ConstructionResult:
        """
        Perfect-utility noise meeting every privacy threshold (with prior).

        Agent i adds lambda W_i W_i^T, W_i an orthonormal basis of the row
        space of G J0^-1 H_i^T; one common lambda is raised until every
        agent's privacy reaches its threshold.

        With partial=True the residual condition is only required of the
        agents that add noise: agents whose residual does not vanish add
        none, and the thresholds must be met by the others' noise alone.

        Args:
            model: With-prior system model
            request: Privacy thresholds, each below the agent's eps_max
            lambda_cap: Largest noise scale tried
            partial: Let agents failing the residual condition stay silent

        Returns:
            ConstructionResult: (I, Theta) with per-agent diagnostics
        """
        _require_case(model, PriorCase.WITH_PRIOR, "construct_with_prior")
        eps = request.for_model(model).eps
        cap = lambda_cap if lambda_cap is not None else get_settings().lambda_cap

        try:
            maxima = eps_max_all(model)
            for i, (e, m) in enumerate(zip(eps, maxima), start=1):
                if e > 0 and e >= m:
                    raise ThresholdAboveMaximumError(
                        f"eps_{i}={e:g} is not below eps_max={m:.6g}", agent_index=i, eps=e, eps_max=m
                    )

            verdict = self.check_with_prior(model)
            qualifying = [a.residual <= a.threshold for a in verdict.agents]
            if not partial and not verdict.achievable:
                raise ConditionsNotMetError("U Psi_i H_i P0 G^T does not vanish for every agent",
                                            residuals=verdict.residuals)
            if partial and not any(qualifying) and any(e > 0 for e in eps):
                raise ConditionsNotMetError("U Psi_i H_i P0 G^T vanishes for no agent",
                                            residuals=verdict.residuals)

            factors = crlb_factors(model)
            G = model.G_stacked
            bases = [row_basis(G @ factors.P0 @ model.H[agent.slice].T) for agent in model.slices()]
            direction = block_diag_from([
                W.projector() if ok else np.zeros((agent.size, agent.size))
                for W, ok, agent in zip(bases, qualifying, model.slices())
            ])
            targets = [(self._privacy_fn(model, factors, j), e) for j, e in enumerate(eps, start=1) if e > 0]

            if targets:
                lam = self._smallest_scale(
                    lambda s: all(p(s * direction) >= e for p, e in targets), cap, "with-prior construction"
                )
            else:
                lam = 0.0

            sanitization = Sanitization.noise_only(lam * direction, list(model.agent_dims))
            self._verify(model, sanitization, eps)
            diagnostics = [
                AgentDiagnostics(agent_index=i, null_dim=W.dim if ok else 0, residual=a.residual,
                                 threshold=a.threshold, noise_scale=lam if ok else 0.0)
                for i, (W, ok, a) in enumerate(zip(bases, qualifying, verdict.agents), start=1)
            ]
            logger.info(f"Constructed with-prior ASUP sanitization, lambda={lam:.6g}, "
                        f"silent agents={[i for i, ok in enumerate(qualifying, start=1) if not ok]}")
            return ConstructionResult(sanitization=sanitization, agents=diagnostics)

        except SanitizationDesignError:
            raise
        except Exception as e:
            logger.error(f"With-prior construction failed: {e}")
            raise

    def construct(self, model: SystemModel, request: PrivacyRequest, lambda_cap: Optional[float] = None,
                  strategy: str = 'witness', partial: bool = False) -> ConstructionResult:
        """Dispatch to the construction of the model's prior case."""
        if model.has_prior:
            return self.construct_with_prior(model, request, lambda_cap, partial)
        if partial:
            raise UnsupportedCaseError("partial construction needs a with-prior model", operation="construct")
        return self.construct_no_prior(model, request, lambda_cap, strategy)


# Global ASUP engine instance
_asup_engine_instance: Optional[AsupEngine] = None


def get_asup_engine() -> AsupEngine:
    """
    Get the global ASUP engine instance.

    Returns:
        AsupEngine: Global ASUP engine instance
    """
    global _asup_engine_instance
    if _asup_engine_instance is None:
        _asup_engine_instance = AsupEngine()
    return _asup_engine_instance


def initialize_asup_engine() -> AsupEngine:
    """
    Initialize the global ASUP engine.

    Returns:
        AsupEngine: Initialized ASUP engine instance
    """
    global _asup_engine_instance
    _asup_engine_instance = AsupEngine()
    return _asup_engine_instance


def xi_matrix(model: SystemModel, i: int) -> np.ndarray:
    return get_asup_engine().xi_matrix(model, i)


def check_asup_no_prior(model: SystemModel, tol: Optional[float] = None) -> AsupVerdict:
    return get_asup_engine().check_no_prior(model, tol)


def check_asup_with_prior(model: SystemModel, tol: Optional[float] = None) -> AsupVerdict:
    return get_asup_engine().check_with_prior(model, tol)


def check_asup(model: SystemModel, tol: Optional[float] = None) -> AsupVerdict:
    return get_asup_engine().check(model, tol)


def construct_no_prior(model: SystemModel, request: PrivacyRequest, lambda_cap: Optional[float] = None,
                       strategy: str = 'witness') -> ConstructionResult:
    return get_asup_engine().construct_no_prior(model, request, lambda_cap, strategy)


def construct_with_prior(model: SystemModel, request: PrivacyRequest,
                         lambda_cap: Optional[float] = None, partial: bool = False) -> ConstructionResult:
    return get_asup_engine().construct_with_prior(model, request, lambda_cap, partial)

"""
Maximum privacy under perfect utility with per-agent noise power budgets.

The perturbed CRLB enters through an auxiliary matrix Z bounded above by it,
written as a linear matrix inequality; perfect utility restricts each agent's
noise to the null space of U Psi_{:,S_i}.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
from scipy import linalg as sla

from ..core.config import get_settings
from ..core.exceptions import (
    InvalidInputError,
    SanitizationDesignError,
    SolverFailureError,
    UnsupportedCaseError,
    WrongCaseError,
)
from ..models import (
    CrlbFactors,
    FunctionalTerm,
    LinearConstraint,
    LinearFunctional,
    LmiConstraint,
    LmiTerm,
    MaxPrivacyResult,
    Sanitization,
    SdpProblem,
    SdpSolution,
    SdpStatus,
    Sense,
    SystemModel,
    VariableBlock,
)
from ..utils.linalg import OrthonormalBasis, block_diag_from, null_basis, rank_tol, symmetrize
from .crlb import crlb_factors, tradeoff_report
from .sdp_solver import solve_sdp

# Configure logging
logger = logging.getLogger(__name__)

Budgets = Union[None, float, Sequence[float]]


@dataclass(frozen=True)
class MaxPrivacyLayout:
    """Problem together with the map from its blocks back to a noise covariance."""
    problem: SdpProblem
    model: SystemModel
    delta: List[float]
    normalized: bool
    bases: List[OrthonormalBasis]
    active: List[int]

    def noise_from(self, solution: SdpSolution) -> np.ndarray:
        """Block-diagonal Theta with each Y_i clamped to PSD and to its budget."""
        blocks = [np.zeros((n, n)) for n in self.model.agent_dims]
        for k, i in enumerate(self.active, start=1):
            w, V = sla.eigh(symmetrize(solution.blocks[k]))
            Y = (V * np.clip(w, 0.0, None)) @ V.T
            budget = self.delta[i - 1]
            if np.trace(Y) > budget:
                Y *= budget / np.trace(Y)
            W = self.bases[i - 1].vectors
            blocks[i - 1] = symmetrize(W @ Y @ W.T)
        return block_diag_from(blocks)


def _budgets(model: SystemModel, delta: Budgets) -> List[float]:
    if delta is None:
        return [get_settings().unbounded_delta] * model.S
    values = [float(delta)] * model.S if np.isscalar(delta) else [float(d) for d in delta]
    if len(values) == 1:
        values = values * model.S
    if len(values) != model.S:
        raise InvalidInputError(f"expected {model.S} power budgets, got {len(values)}")
    if any(not d > 0 or not np.isfinite(d) for d in values):
        raise InvalidInputError("power budgets must be positive and finite", delta=values)
    return values


def _objective(model: SystemModel, factors: CrlbFactors, normalized: bool) -> np.ndarray:
    weight = np.zeros((model.L, model.L))
    for G in model.G:
        if not np.any(G):
            continue
        scale = 1.0 / float(np.trace(G @ factors.P_x @ G.T)) if normalized else 1.0
        weight += scale * (G.T @ G)
    return symmetrize(weight)


def _embedding(model: SystemModel, i: int, W: np.ndarray) -> np.ndarray:
    E = np.zeros((model.N, W.shape[1]))
    E[model.slices()[i - 1].slice] = W
    return E


class PrivacyDesigner:
    """
    Builds and solves the maximum-privacy SDPs of both prior cases.
    """

    def __init__(self):
        """Initialize the privacy designer."""
        logger.info("Privacy designer initialized")

    def _perfect_utility_bases(self, model: SystemModel, factors: CrlbFactors) -> List[OrthonormalBasis]:
        return [null_basis(model.U @ factors.Psi[:, agent.slice]) for agent in model.slices()]

    def _no_prior_lmi(self, model: SystemModel) -> Tuple[np.ndarray, np.ndarray]:
        """Congruence K and the left factor of the Z term for Z <= (H^T (R+Theta)^-1 H)^-1."""
        H = model.H
        N, L = H.shape
        if rank_tol(H) < L:
            raise UnsupportedCaseError("H must have full column rank for the no-prior formulation")
        H_bar = null_basis(H.T).vectors
        T = np.hstack([H, H_bar])
        condition = np.linalg.cond(T)
        if condition <= get_settings().kinv_condition_limit:
            K = sla.inv(T)
            z_left = np.vstack([np.eye(L), np.zeros((N - L, L))])
            return K, z_left

        logger.warning(f"[H, H_bar] has condition number {condition:.3e}; using the orthonormal form")
        Q, R_H = sla.qr(H, mode='economic')
        K = np.vstack([Q.T, H_bar.T])
        z_left = np.vstack([R_H, np.zeros((N - L, L))])
        return K, z_left

    def build_problem(self, model: SystemModel, delta: Budgets = None, normalized: bool = False) -> MaxPrivacyLayout:
        """
        Maximum-privacy SDP over Z and one PSD block Y_i per agent.

        Theta_i = W_i Y_i W_i^T with W_i an orthonormal basis of
        Null(U Psi_{:,S_i}), tr(Y_i) <= delta_i, and the objective
        sum_i tr(G_i Z G_i^T), optionally normalized per agent.

        Args:
            model: System model of either prior case
            delta: Power budget per agent (scalar broadcasts; None means unbounded)
            normalized: Divide each objective term by tr(G_i P_x G_i^T)

        Returns:
            MaxPrivacyLayout: Problem with its block layout
        """
        budgets = _budgets(model, delta)
        factors = crlb_factors(model)
        bases = self._perfect_utility_bases(model, factors)
        active = [i for i, W in enumerate(bases, start=1) if not W.is_empty]
        L, N = model.L, model.N

        blocks = [VariableBlock(dim=L, psd=False, name="Z")]
        blocks += [VariableBlock(dim=bases[i - 1].dim, name=f"Y_{i}") for i in active]

        if model.has_prior:
            P0 = factors.P0
            HP0 = model.H @ P0
            constant = np.block([[P0, HP0.T], [HP0, HP0 @ model.H.T + model.R]])
            z_left = np.vstack([np.eye(L), np.zeros((N, L))])
            noise_left = [np.vstack([np.zeros((L, bases[i - 1].dim)), _embedding(model, i, bases[i - 1].vectors)])
                          for i in active]
        else:
            K, z_left = self._no_prior_lmi(model)
            constant = K @ model.R @ K.T
            noise_left = [K @ _embedding(model, i, bases[i - 1].vectors) for i in active]

        lmi = LmiConstraint(
            constant=symmetrize(constant),
            terms=[LmiTerm(block=0, left=z_left, sign=-1.0)]
            + [LmiTerm(block=k, left=left, sign=1.0) for k, left in enumerate(noise_left, start=1)],
            name="crlb_bound"
        )
        budget_constraints = [
            LinearConstraint(
                functional=LinearFunctional(terms=[FunctionalTerm(block=k, coeff=np.eye(bases[i - 1].dim))]),
                rhs=budgets[i - 1],
                name=f"power_{i}"
            )
            for k, i in enumerate(active, start=1)
        ]
        problem = SdpProblem(
            blocks=blocks,
            objective=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=_objective(model, factors, normalized))]),
            sense=Sense.MAXIMIZE,
            inequality_constraints=budget_constraints,
            lmi_constraints=[lmi],
            name=f"max_privacy_{model.prior_case.value}"
        )
        return MaxPrivacyLayout(problem=problem, model=model, delta=budgets, normalized=normalized,
                                bases=bases, active=active)

    def solve(self, layout: MaxPrivacyLayout) -> MaxPrivacyResult:
        """
        Solve a built problem and evaluate the noise it yields.

        Args:
            layout: Output of build_problem

        Returns:
            MaxPrivacyResult: Noise, attained privacies and solver status
        """
        model = layout.model
        try:
            if not layout.active:
                logger.info("No agent has perfect-utility noise directions; Theta = 0")
                Theta = np.zeros((model.N, model.N))
                status, objective_value = SdpStatus.OPTIMAL, float('nan')
            else:
                solution = solve_sdp(layout.problem)
                if not solution.status.usable:
                    raise SolverFailureError(f"max-privacy SDP ended with status {solution.status.value}",
                                             solution=solution, status=solution.status.value)
                Theta = layout.noise_from(solution)
                status, objective_value = solution.status, solution.objective_value

            sanitization = Sanitization.noise_only(Theta, list(model.agent_dims))
            report = tradeoff_report(model, sanitization)
            if np.isnan(objective_value):
                weight = _objective(model, crlb_factors(model), layout.normalized)
                objective_value = float(np.sum(weight * report.P_tilde))

            result = MaxPrivacyResult(
                sanitization=sanitization,
                privacy=report.privacy,
                utility=report.utility,
                objective_value=objective_value,
                delta=layout.delta,
                normalized=layout.normalized,
                status=status,
                active_agents=layout.active
            )
            logger.info(f"Max privacy ({model.prior_case.value}): p={result.privacy}, u={result.utility:.3e}")
            return result

        except SanitizationDesignError:
            raise
        except Exception as e:
            logger.error(f"Max-privacy solve failed: {e}")
            raise

    def max_privacy_no_prior(self, model: SystemModel, delta: Budgets = None,
                             normalized: bool = False) -> MaxPrivacyResult:
        """Maximum privacy at perfect utility for a model without prior."""
        if model.has_prior:
            raise WrongCaseError("max_privacy_no_prior needs a no-prior model")
        return self.solve(self.build_problem(model, delta, normalized))

    def max_privacy_with_prior(self, model: SystemModel, delta: Budgets = None,
                               normalized: bool = False) -> MaxPrivacyResult:
        """Maximum privacy at perfect utility for a model with prior."""
        if not model.has_prior:
            raise WrongCaseError("max_privacy_with_prior needs a model with prior")
        return self.solve(self.build_problem(model, delta, normalized))

    def max_privacy(self, model: SystemModel, delta: Budgets = None, normalized: bool = False) -> MaxPrivacyResult:
        """Dispatch on the model's prior case."""
        return self.solve(self.build_problem(model, delta, normalized))


# Global privacy designer instance
_privacy_designer_instance: Optional[PrivacyDesigner] = None


def get_privacy_designer() -> PrivacyDesigner:
    """
    Get the global privacy designer instance.

    Returns:
        PrivacyDesigner: Global privacy designer instance
    """
    global _privacy_designer_instance
    if _privacy_designer_instance is None:
        _privacy_designer_instance = PrivacyDesigner()
    return _privacy_designer_instance


def max_privacy_no_prior(model: SystemModel, delta: Budgets = None, normalized: bool = False) -> MaxPrivacyResult:
    return get_privacy_designer().max_privacy_no_prior(model, delta, normalized)


def max_privacy_with_prior(model: SystemModel, delta: Budgets = None, normalized: bool = False) -> MaxPrivacyResult:
    return get_privacy_designer().max_privacy_with_prior(model, delta, normalized)


def max_privacy(model: SystemModel, delta: Budgets = None, normalized: bool = False) -> MaxPrivacyResult:
    return get_privacy_designer().max_privacy(model, delta, normalized)

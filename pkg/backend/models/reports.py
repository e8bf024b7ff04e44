"""
Result data models for CRLB evaluation and ASUP analysis.
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from .common import Matrix, ReportMatrix
from .sanitization import Sanitization
from .system import PriorCase


class CrlbFactors(BaseModel):
    """Baseline CRLB and the factors of the perturbed-CRLB decomposition."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    P_x: Matrix = Field(..., description="Baseline CRLB (J0 + H^T R^-1 H)^-1")
    Psi: Matrix = Field(..., description="L x N gain factor")
    Phi: Matrix = Field(..., description="N x N symmetric PSD factor")
    prior_case: PriorCase = Field(..., description="Which closed forms were used")
    P0: Optional[Matrix] = Field(None, description="Prior covariance J0^-1 (with prior only)")


class TradeoffReport(BaseModel):
    """Utility, per-agent privacy and the bounds they were computed from."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    utility: float = Field(..., description="Utility u, at most 0; -inf when information is destroyed")
    privacy: List[float] = Field(..., description="Privacy p_i per agent")
    P_x: ReportMatrix = Field(..., description="Baseline CRLB")
    P_tilde: ReportMatrix = Field(..., description="Perturbed CRLB; inf marks unbounded directions")
    eps_max: List[float] = Field(..., description="Largest attainable privacy per agent")


class AgentDiagnostics(BaseModel):
    """Per-agent quantities behind an ASUP verdict or construction."""

    agent_index: int = Field(..., ge=1, description="Agent number")
    private_index: Optional[int] = Field(None, description="Private map j the agent's noise hides (constructions)")
    xi_rank: Optional[int] = Field(None, description="Numerical rank of the agent's Xi matrix")
    null_dim: Optional[int] = Field(None, description="Dimension of Null(Xi_i)")
    residual: Optional[float] = Field(None, description="||U Psi_i H_i P0 G^T||_F (with prior)")
    threshold: Optional[float] = Field(None, description="Tolerance the residual was compared with")
    chosen_vector: Optional[List[float]] = Field(None, description="Noise direction chosen for the agent")
    noise_scale: Optional[float] = Field(None, description="Noise scale lambda chosen for the agent")


class PrivateMapVerdict(BaseModel):
    """Witness agents for one nonzero private map (no prior)."""

    private_index: int = Field(..., ge=1, description="Index j of G_j")
    witnesses: List[int] = Field(default_factory=list, description="Agents able to hide G_j x")

    @property
    def achievable(self) -> bool:
        return bool(self.witnesses)


class AsupVerdict(BaseModel):
    """Whether an arbitrarily strong utility-privacy tradeoff is achievable."""

    achievable: bool = Field(..., description="Overall verdict")
    prior_case: PriorCase = Field(..., description="Which checker decided the verdict")
    tol: float = Field(..., description="Relative tolerance used")
    per_private: List[PrivateMapVerdict] = Field(default_factory=list, description="No-prior witnesses")
    residuals: List[float] = Field(default_factory=list, description="With-prior residual norm per agent")
    agents: List[AgentDiagnostics] = Field(default_factory=list, description="Per-agent diagnostics")


class ConstructionResult(BaseModel):
    """A constructed sanitization together with its diagnostics."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sanitization: Sanitization
    agents: List[AgentDiagnostics] = Field(default_factory=list)


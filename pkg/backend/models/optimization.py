"""
Optimization data models: SDP problems and solutions, block-coordinate
terms and the alternating optimizer's trace.
"""

from enum import Enum
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .common import Matrix
from .sanitization import Sanitization


class SdpStatus(str, Enum):
    """Outcome of an SDP solve."""
    OPTIMAL = "optimal"
    INACCURATE = "inaccurate"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max-iter"

    @property
    def usable(self) -> bool:
        return self in (SdpStatus.OPTIMAL, SdpStatus.INACCURATE)


class Sense(str, Enum):
    """Optimization direction."""
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


def _check_symmetric(v: np.ndarray) -> np.ndarray:
    if v.shape[0] != v.shape[1]:
        raise ValueError(f"coefficient must be square, got {v.shape}")
    if v.size and np.max(np.abs(v - v.T)) > 1e-10 * max(np.max(np.abs(v)), 1.0):
        raise ValueError("coefficient matrix must be symmetric")
    return v


class VariableBlock(BaseModel):
    """Symmetric matrix variable; PSD-constrained unless `psd` is False."""

    dim: int = Field(..., ge=1, description="Block dimension")
    psd: bool = Field(True, description="Constrain the block to the PSD cone")
    name: str = Field("", description="Label used in dumps and logs")


class FunctionalTerm(BaseModel):
    """tr(coeff @ X_block)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    block: int = Field(..., ge=0, description="Variable block index")
    coeff: Matrix = Field(..., description="Symmetric coefficient matrix")

    @field_validator('coeff')
    @classmethod
    def validate_coeff(cls, v):
        """Validate the coefficient is symmetric."""
        return _check_symmetric(v)


class LinearFunctional(BaseModel):
    """Sum of trace inner products with the variable blocks."""

    terms: List[FunctionalTerm] = Field(default_factory=list)


class LinearConstraint(BaseModel):
    """functional == rhs (equality) or functional <= rhs (inequality)."""

    functional: LinearFunctional
    rhs: float = 0.0
    name: str = ""


class LmiTerm(BaseModel):
    """sign * left @ X_block @ left^T."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    block: int = Field(..., ge=0)
    left: Matrix = Field(..., description="m x n_block congruence factor")
    sign: float = Field(1.0)


class LmiConstraint(BaseModel):
    """constant + sum of congruence terms must be PSD."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    constant: Matrix = Field(..., description="Symmetric m x m constant")
    terms: List[LmiTerm] = Field(default_factory=list)
    name: str = ""

    @field_validator('constant')
    @classmethod
    def validate_constant(cls, v):
        """Validate the constant is symmetric."""
        return _check_symmetric(v)

    @property
    def size(self) -> int:
        return self.constant.shape[0]


class SdpProblem(BaseModel):
    """Linear objective over symmetric blocks with linear and LMI constraints."""

    blocks: List[VariableBlock] = Field(..., min_length=1)
    objective: LinearFunctional
    sense: Sense = Sense.MAXIMIZE
    equality_constraints: List[LinearConstraint] = Field(default_factory=list)
    inequality_constraints: List[LinearConstraint] = Field(default_factory=list)
    lmi_constraints: List[LmiConstraint] = Field(default_factory=list)
    name: str = "sdp"

    @model_validator(mode='after')
    def validate_dimensions(self):
        """Validate every coefficient matches its block dimension."""
        dims = [b.dim for b in self.blocks]
        functionals = [self.objective] + [c.functional for c in
                                          self.equality_constraints + self.inequality_constraints]
        for functional in functionals:
            for term in functional.terms:
                if term.block >= len(dims) or term.coeff.shape != (dims[term.block], dims[term.block]):
                    raise ValueError(f"functional term on block {term.block} has shape {term.coeff.shape}")
        for lmi in self.lmi_constraints:
            for term in lmi.terms:
                if term.block >= len(dims) or term.left.shape != (lmi.size, dims[term.block]):
                    raise ValueError(f"LMI '{lmi.name}' term on block {term.block} has shape {term.left.shape}")
        return self

    @property
    def variable_dims(self) -> List[int]:
        return [b.dim for b in self.blocks]


class KktResiduals(BaseModel):
    """Relative primal infeasibility, dual infeasibility and complementarity."""

    primal: float = Field(..., description="Largest relative constraint violation")
    dual: float = Field(..., description="Largest relative dual cone violation")
    gap: float = Field(..., description="Relative complementarity")

    def within(self, tol: float) -> bool:
        return max(self.primal, self.dual, self.gap) <= tol


class SdpSolution(BaseModel):
    """Solver output for an SdpProblem."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    blocks: List[Matrix] = Field(default_factory=list, description="Variable block values")
    objective_value: float = Field(float('nan'), description="Objective at the returned point")
    status: SdpStatus
    kkt_residuals: Optional[KktResiduals] = None
    solver: str = ""
    iterations: Optional[int] = None


class BlockTerms(BaseModel):
    """Constants of one agent's block subproblem."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    agent_index: int = Field(..., ge=1)
    Gamma_u: Matrix
    Gamma_p: List[Matrix]
    Omega: Matrix
    Delta_u: float
    Delta_p: List[float]
    T: Matrix = Field(..., description="Inverse of the others' inverse-noise plus Phi block")
    utility_norm: float = Field(..., description="tr(U P_x U^T)")
    privacy_norms: List[float] = Field(..., description="tr(G_j P_x G_j^T); 0 for zero maps")
    regularized: bool = Field(False, description="T-block system needed regularization")


class TraceRow(BaseModel):
    """Tradeoff after one agent-block solve."""

    iteration: int = Field(..., ge=0)
    agent: int = Field(..., ge=0, description="Agent solved; 0 marks the initial point")
    utility: float
    privacy: List[float]
    status: str


class AltOptTrace(BaseModel):
    """History of an alternating optimization run."""

    rows: List[TraceRow] = Field(default_factory=list)
    converged: bool = False
    sweeps: int = 0

    def sweep_utilities(self) -> List[float]:
        """Utility at the end of every sweep, starting with the initial point."""
        ends = {}
        for row in self.rows:
            ends[row.iteration] = row.utility
        return [ends[k] for k in sorted(ends)]

    def to_frame(self) -> pd.DataFrame:
        """Trace as a table with columns iteration, agent, utility, p_1..p_S, status."""
        S = len(self.rows[0].privacy) if self.rows else 0
        records = []
        for row in self.rows:
            record = {'iteration': row.iteration, 'agent': row.agent, 'utility': row.utility}
            record.update({f'p_{j + 1}': p for j, p in enumerate(row.privacy)})
            record['status'] = row.status
            records.append(record)
        columns = ['iteration', 'agent', 'utility'] + [f'p_{j + 1}' for j in range(S)] + ['status']
        return pd.DataFrame.from_records(records, columns=columns)


class MaxPrivacyResult(BaseModel):
    """Largest privacy attainable at perfect utility under power budgets."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sanitization: Sanitization
    privacy: List[float] = Field(..., description="Attained privacy p_i per agent")
    utility: float = Field(..., description="Utility of the returned noise, 0 up to round-off")
    objective_value: float = Field(..., description="SDP objective at the returned point")
    delta: List[float] = Field(..., description="Power budget per agent")
    normalized: bool = Field(False, description="Objective terms divided by tr(G_i P_x G_i^T)")
    status: SdpStatus
    active_agents: List[int] = Field(default_factory=list, description="Agents with room for perfect-utility noise")

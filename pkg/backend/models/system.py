"""
System model data models for multi-agent linear estimation.

This module contains the observation model y = Hx + n shared by all agents,
the agent partition and privacy requests.
"""

from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .common import Matrix


class PriorCase(str, Enum):
    """Whether prior information about x is available."""
    NO_PRIOR = "no-prior"
    WITH_PRIOR = "with-prior"


class AgentSlice(BaseModel):
    """Contiguous block of measurement rows owned by one agent."""
    model_config = ConfigDict(frozen=True)

    agent_index: int = Field(..., ge=1, description="Agent number, starting at 1")
    start: int = Field(..., ge=0, description="First row (0-based)")
    stop: int = Field(..., description="One past the last row (0-based)")

    @property
    def slice(self) -> slice:
        return slice(self.start, self.stop)

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def index_set(self) -> List[int]:
        """Row numbers of the agent counted from 1."""
        return list(range(self.start + 1, self.stop + 1))


class SystemModel(BaseModel):
    """
    Multi-agent observation model.

    Shape and symmetry checks run here; definiteness checks that need
    tolerances are run by the loader in `backend.utils.model_io`.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    agent_dims: List[int] = Field(..., min_length=1, description="Measurement count N_i per agent")
    H: Matrix = Field(..., description="N x L observation matrix")
    R: Matrix = Field(..., description="N x N measurement noise covariance")
    J0: Optional[Matrix] = Field(None, description="L x L prior Fisher information; None means no prior")
    U: Matrix = Field(..., description="Public parameter map")
    G: List[Matrix] = Field(..., min_length=1, description="Private parameter map per agent")

    @field_validator('agent_dims')
    @classmethod
    def validate_agent_dims(cls, v):
        """Validate every agent owns at least one measurement."""
        if any(n <= 0 for n in v):
            raise ValueError('agent_dims entries must be positive')
        return v

    @field_validator('J0')
    @classmethod
    def normalize_zero_prior(cls, v):
        """An all-zero prior FIM is the no-prior case."""
        if v is not None and v.size and not np.any(v):
            return None
        return v

    @model_validator(mode='after')
    def validate_dimensions(self):
        """Validate all matrix dimensions agree with H and agent_dims."""
        N, L = self.H.shape
        if sum(self.agent_dims) != N:
            raise ValueError(f"agent_dims: sum {sum(self.agent_dims)} does not match N={N}")
        if self.R.shape != (N, N):
            raise ValueError(f"R: expected shape {(N, N)}, got {self.R.shape}")
        if self.J0 is not None and self.J0.shape != (L, L):
            raise ValueError(f"J0: expected shape {(L, L)}, got {self.J0.shape}")
        if self.U.shape[1] != L:
            raise ValueError(f"U: expected {L} columns, got {self.U.shape[1]}")
        if len(self.G) != len(self.agent_dims):
            raise ValueError(f"G: expected {len(self.agent_dims)} matrices, got {len(self.G)}")
        for idx, g in enumerate(self.G):
            if g.shape[1] != L:
                raise ValueError(f"G[{idx}]: expected {L} columns, got {g.shape[1]}")
        return self

    @property
    def N(self) -> int:
        return self.H.shape[0]

    @property
    def L(self) -> int:
        return self.H.shape[1]

    @property
    def S(self) -> int:
        return len(self.agent_dims)

    @property
    def prior_case(self) -> PriorCase:
        return PriorCase.NO_PRIOR if self.J0 is None else PriorCase.WITH_PRIOR

    @property
    def has_prior(self) -> bool:
        return self.J0 is not None

    @property
    def J0_matrix(self) -> np.ndarray:
        """Prior FIM with the no-prior case as the zero matrix."""
        return np.zeros((self.L, self.L)) if self.J0 is None else self.J0

    @property
    def G_stacked(self) -> np.ndarray:
        """All private maps stacked vertically."""
        return np.vstack(self.G)

    def slices(self) -> List[AgentSlice]:
        offsets = np.concatenate([[0], np.cumsum(self.agent_dims)])
        return [
            AgentSlice(agent_index=i + 1, start=int(offsets[i]), stop=int(offsets[i + 1]))
            for i in range(self.S)
        ]

    def with_noise_scaled(self, factor: float) -> 'SystemModel':
        """Same model with R multiplied by a positive scalar."""
        return self.model_copy(update={'R': _frozen(self.R * factor)})


class PrivacyRequest(BaseModel):
    """Privacy thresholds and optional power budgets, one per agent."""

    eps: List[float] = Field(..., description="Privacy threshold per agent")
    delta: Optional[List[float]] = Field(None, description="Noise power budget per agent")

    @field_validator('eps')
    @classmethod
    def validate_eps(cls, v):
        """Validate thresholds are non-negative."""
        if any(e < 0 or not np.isfinite(e) for e in v):
            raise ValueError('privacy thresholds must be finite and non-negative')
        return v

    @field_validator('delta')
    @classmethod
    def validate_delta(cls, v):
        """Validate power budgets are positive."""
        if v is not None and any(d <= 0 for d in v):
            raise ValueError('power budgets must be positive')
        return v

    @classmethod
    def uniform(cls, S: int, eps: float, delta: Optional[float] = None) -> 'PrivacyRequest':
        return cls(eps=[eps] * S, delta=None if delta is None else [delta] * S)

    def for_model(self, model: SystemModel) -> 'PrivacyRequest':
        """Broadcast a single threshold to every agent and check the count."""
        eps = self.eps * model.S if len(self.eps) == 1 else self.eps
        delta = self.delta
        if delta is not None and len(delta) == 1:
            delta = delta * model.S
        if len(eps) != model.S or (delta is not None and len(delta) != model.S):
            raise ValueError(f"expected {model.S} thresholds/budgets, one per agent")
        return PrivacyRequest(eps=eps, delta=delta)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr

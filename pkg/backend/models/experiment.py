"""
Experiment and command data models.

This module contains the randomized-study settings and the result of a
command-line invocation.
"""

from enum import Enum
from typing import List

from pydantic import BaseModel, Field, field_validator, model_validator


class PriorMode(str, Enum):
    """How random models treat prior information."""
    NONE = "none"
    RANDOM_PD = "random-PD"


class ExperimentSpec(BaseModel):
    """Parameters of a randomized study over system models."""

    N: int = Field(72, ge=1, description="Total number of observations")
    L: int = Field(12, ge=1, description="Dimension of the hidden parameter")
    S_values: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 6, 8, 9, 12, 18], description="Agent counts")
    U_dim_values: List[int] = Field(default_factory=lambda: [1, 2, 3, 4], description="Public map dimensions")
    G_dim: int = Field(3, ge=1, description="Rows of the shared private map")
    trials: int = Field(100, ge=1, description="Random models per data point")
    seed: int = Field(0, ge=0, lt=2 ** 64, description="64-bit base seed")
    prior: PriorMode = Field(PriorMode.RANDOM_PD, description="Prior mode for figures 3 and 4")
    privacy_cap: float = Field(100.0, gt=0, description="Truncation of reported maximum privacy")
    eps_values: List[float] = Field(default_factory=lambda: [1.0, 2.0, 5.0, 10.0],
                                    description="Privacy thresholds swept by figure 3")
    eps_iteration: float = Field(10.0, ge=0, description="Privacy threshold of figure 4")
    max_iters: int = Field(30, ge=1, description="Sweeps of the alternating optimizer")

    @field_validator('S_values', 'U_dim_values')
    @classmethod
    def validate_positive(cls, v):
        """Validate grid values are positive."""
        if not v or any(x <= 0 for x in v):
            raise ValueError('grid values must be positive and non-empty')
        return v

    @model_validator(mode='after')
    def validate_partition(self):
        """Validate N splits evenly across every agent count."""
        bad = [S for S in self.S_values if self.N % S]
        if bad:
            raise ValueError(f"N={self.N} is not divisible by S in {bad}")
        return self

    @classmethod
    def paper_scale(cls, figure: int, **overrides) -> 'ExperimentSpec':
        """Full-size settings (N=72, L=12, 100 trials)."""
        base = {1: dict(S_values=[1, 2, 3, 4, 6, 8]),
                2: dict(S_values=[1, 2, 3, 4, 6, 8]),
                3: dict(S_values=[9, 12, 18]),
                4: dict(S_values=[9], U_dim_values=[2])}[figure]
        if figure in (3, 4):
            base.setdefault('U_dim_values', [2])
        base.update(overrides)
        return cls(**base)

    @classmethod
    def desk_scale(cls, figure: int, **overrides) -> 'ExperimentSpec':
        """Reduced settings for routine runs (N=24, L=6, 20 trials)."""
        base = {1: dict(S_values=[1, 2, 3, 4, 6]),
                2: dict(S_values=[1, 2, 3, 4, 6]),
                3: dict(S_values=[3, 4, 6]),
                4: dict(S_values=[4], U_dim_values=[2])}[figure]
        base.update(N=24, L=6, trials=20)
        if figure in (3, 4):
            base.setdefault('U_dim_values', [2])
        base.update(overrides)
        return cls(**base)


class CommandResult(BaseModel):
    """Outcome of one command-line invocation."""

    exit_code: int = Field(..., description="0 ok, 1 usage, 2 model-invalid, 3 infeasible, 4 solver-failure")
    stdout: str = Field("", description="JSON or CSV payload")
    stderr: str = Field("", description="Human-readable diagnostic")

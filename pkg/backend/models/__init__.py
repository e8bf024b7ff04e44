"""
Data models for the sanitization designer.

This package contains all Pydantic models for system models, sanitizations,
CRLB reports, ASUP verdicts, SDP problems and experiment settings.
"""

from .system import (
    SystemModel,
    AgentSlice,
    PrivacyRequest,
    PriorCase
)

from .sanitization import (
    Sanitization,
    block_mask
)

from .reports import (
    CrlbFactors,
    TradeoffReport,
    AgentDiagnostics,
    PrivateMapVerdict,
    AsupVerdict,
    ConstructionResult
)

from .optimization import (
    SdpStatus,
    Sense,
    VariableBlock,
    FunctionalTerm,
    LinearFunctional,
    LinearConstraint,
    LmiTerm,
    LmiConstraint,
    SdpProblem,
    KktResiduals,
    SdpSolution,
    BlockTerms,
    TraceRow,
    AltOptTrace,
    MaxPrivacyResult
)

from .experiment import (
    ExperimentSpec,
    PriorMode,
    CommandResult
)

__all__ = [
    # System models
    "SystemModel",
    "AgentSlice",
    "PrivacyRequest",
    "PriorCase",

    # Sanitization models
    "Sanitization",
    "block_mask",

    # Report models
    "CrlbFactors",
    "TradeoffReport",
    "AgentDiagnostics",
    "PrivateMapVerdict",
    "AsupVerdict",
    "ConstructionResult",

    # Optimization models
    "SdpStatus",
    "Sense",
    "VariableBlock",
    "FunctionalTerm",
    "LinearFunctional",
    "LinearConstraint",
    "LmiTerm",
    "LmiConstraint",
    "SdpProblem",
    "KktResiduals",
    "SdpSolution",
    "BlockTerms",
    "TraceRow",
    "AltOptTrace",
    "MaxPrivacyResult",

    # Experiment models
    "ExperimentSpec",
    "PriorMode",
    "CommandResult"
]

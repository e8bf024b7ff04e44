"""
Utilities package for the sanitization designer.

This package contains the tolerance-aware linear algebra kit and the JSON
input/output of models and sanitizations.
"""

from .linalg import (
    Tolerance,
    OrthonormalBasis,
    rank_tol,
    null_basis,
    row_basis,
    complete_unitary,
    is_psd,
    symmetrize,
    psd_sqrt,
    spd_inverse,
    block_diag_from
)

from .model_io import (
    load_model,
    save_model,
    validate_model,
    model_to_dict,
    load_sanitization,
    save_sanitization,
    agent_slice
)

__all__ = [
    # Linear algebra
    'Tolerance',
    'OrthonormalBasis',
    'rank_tol',
    'null_basis',
    'row_basis',
    'complete_unitary',
    'is_psd',
    'symmetrize',
    'psd_sqrt',
    'spd_inverse',
    'block_diag_from',

    # Model input/output
    'load_model',
    'save_model',
    'validate_model',
    'model_to_dict',
    'load_sanitization',
    'save_sanitization',
    'agent_slice'
]

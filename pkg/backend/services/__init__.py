"""
Services package for the sanitization designer.

This package contains the CRLB evaluation, sanitization mechanisms, ASUP
checks and constructions, the SDP front end, the maximum-privacy designer,
the alternating optimizer and the randomized experiments.
"""

from .crlb import (
    baseline_crlb,
    crlb_factors,
    perturbed_fim,
    perturbed_crlb,
    perturbed_crlb_decomposed,
    utility,
    privacy,
    eps_max,
    tradeoff_report
)
from .sanitizer import normalize, apply, boundary_approximation
from .asup_engine import (
    get_asup_engine,
    initialize_asup_engine,
    AsupEngine,
    check_asup,
    check_asup_no_prior,
    check_asup_with_prior,
    construct_no_prior,
    construct_with_prior
)
from .sdp_solver import get_sdp_solver, SdpSolver, solve_sdp, dump_sdp
from .privacy_sdp import (
    get_privacy_designer,
    PrivacyDesigner,
    max_privacy,
    max_privacy_no_prior,
    max_privacy_with_prior
)
from .alternating_optimizer import (
    get_alternating_optimizer,
    AlternatingOptimizer,
    alternating_optimize,
    solve_agent_block
)
from .experiment_runner import get_experiment_runner, ExperimentRunner, gen_random_model, run_figure

__all__ = [
    # CRLB
    "baseline_crlb",
    "crlb_factors",
    "perturbed_fim",
    "perturbed_crlb",
    "perturbed_crlb_decomposed",
    "utility",
    "privacy",
    "eps_max",
    "tradeoff_report",

    # Sanitization mechanisms
    "normalize",
    "apply",
    "boundary_approximation",

    # ASUP
    "get_asup_engine",
    "initialize_asup_engine",
    "AsupEngine",
    "check_asup",
    "check_asup_no_prior",
    "check_asup_with_prior",
    "construct_no_prior",
    "construct_with_prior",

    # SDP
    "get_sdp_solver",
    "SdpSolver",
    "solve_sdp",
    "dump_sdp",
    "get_privacy_designer",
    "PrivacyDesigner",
    "max_privacy",
    "max_privacy_no_prior",
    "max_privacy_with_prior",

    # Alternating optimization
    "get_alternating_optimizer",
    "AlternatingOptimizer",
    "alternating_optimize",
    "solve_agent_block",

    # Experiments
    "get_experiment_runner",
    "ExperimentRunner",
    "gen_random_model",
    "run_figure"
]

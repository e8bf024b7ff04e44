"""
Shared fixtures for the sanitization designer tests.
"""

from pathlib import Path
from typing import Optional

import numpy as np
import pytest

from backend.core.config import reload_config
from backend.models import Sanitization, SystemModel
from backend.utils.linalg import block_diag_from
from backend.utils.model_io import load_model

FIXTURES_DIR = Path(__file__).parent.parent / "data" / "fixtures"


@pytest.fixture(autouse=True)
def fresh_settings():
    """Undo settings overrides made by a test."""
    yield
    reload_config()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture
def no_prior_model() -> SystemModel:
    """H=[[1,0],[0,1],[0,0]], R=I3, U=[[1,0]], G=[[0,1]], one agent."""
    return load_model(FIXTURES_DIR / "no_prior_3x2.json")


@pytest.fixture
def g_equals_u_model() -> SystemModel:
    return load_model(FIXTURES_DIR / "no_prior_3x2_g_equals_u.json")


@pytest.fixture
def with_prior_model() -> SystemModel:
    """H=R=J0=I2, U=[[1,0]], G=[[0,1]], one agent."""
    return load_model(FIXTURES_DIR / "with_prior_2x2.json")


@pytest.fixture
def violating_prior_model() -> SystemModel:
    return load_model(FIXTURES_DIR / "with_prior_2x2_violating.json")


def random_spd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    A = rng.uniform(-scale, scale, size=(n, n))
    return A @ A.T + 0.1 * scale * scale * np.eye(n)


def random_model(rng: np.random.Generator, N: int, L: int, S: int, prior: bool,
                 U_dim: int = 1, agent_dims: Optional[list] = None) -> SystemModel:
    """Random well-conditioned model with N measurements split over S agents."""
    if agent_dims is None:
        base, extra = divmod(N, S)
        agent_dims = [base + (1 if k < extra else 0) for k in range(S)]
    return SystemModel(
        agent_dims=agent_dims,
        H=rng.uniform(-1.0, 1.0, size=(N, L)),
        R=random_spd(rng, N),
        J0=random_spd(rng, L) if prior else None,
        U=rng.uniform(-1.0, 1.0, size=(U_dim, L)),
        G=[rng.uniform(-1.0, 1.0, size=(1, L)) for _ in range(S)]
    )


def random_block_psd(rng: np.random.Generator, agent_dims: list, scale: float = 1.0) -> np.ndarray:
    blocks = []
    for n in agent_dims:
        A = rng.normal(size=(n, n)) * scale
        blocks.append(A @ A.T)
    return block_diag_from(blocks)


def random_sanitization(rng: np.random.Generator, agent_dims: list) -> Sanitization:
    C = block_diag_from([rng.normal(size=(n, n)) + 2.0 * np.eye(n) for n in agent_dims])
    return Sanitization(C=C, Theta=random_block_psd(rng, agent_dims), agent_dims=agent_dims)

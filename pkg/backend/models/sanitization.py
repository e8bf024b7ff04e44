"""
Sanitization data model: per-agent compression plus Gaussian noise.
"""

from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .common import Matrix

OFF_BLOCK_ATOL = 1e-12


def block_mask(agent_dims: List[int]) -> np.ndarray:
    """Boolean N x N mask that is True on the agent diagonal blocks."""
    N = sum(agent_dims)
    mask = np.zeros((N, N), dtype=bool)
    start = 0
    for n in agent_dims:
        mask[start:start + n, start:start + n] = True
        start += n
    return mask


class Sanitization(BaseModel):
    """
    Decentralized sanitization (C, Theta).

    Both matrices are block-diagonal with the blocks given by agent_dims.
    Off-block entries up to 1e-12 are treated as round-off and zeroed.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    C: Matrix = Field(..., description="Block-diagonal N x N compression matrix")
    Theta: Matrix = Field(..., description="Block-diagonal N x N PSD noise covariance")
    agent_dims: List[int] = Field(..., min_length=1, description="Block sizes N_i")

    @model_validator(mode='before')
    @classmethod
    def enforce_block_structure(cls, data):
        """Validate shapes and block layout, zeroing round-off off the blocks."""
        if not isinstance(data, dict):
            return data
        dims = data.get('agent_dims')
        if dims is None:
            return data
        N = sum(dims)
        mask = block_mask(dims)
        cleaned = dict(data)
        for name in ('C', 'Theta'):
            if name not in data:
                continue
            arr = np.array(data[name], dtype=float)
            if arr.shape != (N, N):
                raise ValueError(f"{name}: expected shape {(N, N)}, got {arr.shape}")
            off = np.abs(arr[~mask])
            if off.size and off.max() > OFF_BLOCK_ATOL:
                raise ValueError(f"{name}: off-block entry {off.max():.3e} breaks the agent block structure")
            arr[~mask] = 0.0
            cleaned[name] = arr
        if 'Theta' in cleaned:
            theta = cleaned['Theta']
            scale = max(np.max(np.abs(theta)), 1.0) if theta.size else 1.0
            if theta.size and np.max(np.abs(theta - theta.T)) > 1e-10 * scale:
                raise ValueError("Theta: matrix is not symmetric")
            theta = 0.5 * (theta + theta.T)
            if theta.size:
                lam_min = np.linalg.eigvalsh(theta)[0]
                if lam_min < -1e-10 * max(np.linalg.norm(theta, 2), 1.0):
                    raise ValueError(f"Theta: not positive semidefinite (lambda_min={lam_min:.3e})")
            cleaned['Theta'] = theta
        return cleaned

    @property
    def N(self) -> int:
        return self.C.shape[0]

    def C_block(self, i: int) -> np.ndarray:
        """Compression block of agent i (1-based)."""
        start = sum(self.agent_dims[:i - 1])
        stop = start + self.agent_dims[i - 1]
        return self.C[start:stop, start:stop]

    def Theta_block(self, i: int) -> np.ndarray:
        """Noise covariance block of agent i (1-based)."""
        start = sum(self.agent_dims[:i - 1])
        stop = start + self.agent_dims[i - 1]
        return self.Theta[start:stop, start:stop]

    def to_file_dict(self) -> dict:
        """Payload of the sanitization file format."""
        return {'C': self.C.tolist(), 'Theta': self.Theta.tolist()}

    @classmethod
    def noise_only(cls, Theta: np.ndarray, agent_dims: List[int]) -> 'Sanitization':
        """Pure-noise sanitization (I, Theta)."""
        N = sum(agent_dims)
        return cls(C=np.eye(N), Theta=Theta, agent_dims=agent_dims)

    @classmethod
    def identity(cls, agent_dims: List[int]) -> 'Sanitization':
        """The no-op sanitization (I, 0)."""
        N = sum(agent_dims)
        return cls(C=np.eye(N), Theta=np.zeros((N, N)), agent_dims=agent_dims)

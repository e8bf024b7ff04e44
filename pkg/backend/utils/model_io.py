"""
Loading, saving and validation of system models and sanitizations.

Model files are JSON objects with row-major matrices:
{"agent_dims": [...], "H": [[...]], "R": [[...]], "J0": [[...]] | null,
 "U": [[...]], "G": [[[...]], ...]}. Sanitization files hold {"C", "Theta"}.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Union
import logging

import numpy as np
from pydantic import ValidationError
from scipy import linalg as sla

from ..core.exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    InvariantViolationError,
    ModelValidationError,
    SingularModelError,
)
from ..models import AgentSlice, Sanitization, SystemModel
from .linalg import Tolerance, is_psd, symmetrize

# Configure logging
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ModelValidationError(f"File not found: {path}", path=str(path))
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelValidationError(f"Could not parse {path}: {e}", path=str(path))
    if not isinstance(data, dict):
        raise ModelValidationError(f"{path} must contain a JSON object", path=str(path))
    return data


def _translate(error: ValidationError) -> ModelValidationError:
    first = error.errors()[0]
    loc = [str(part) for part in first.get('loc', ())]
    message = str(first.get('msg', error)).removeprefix('Value error, ')
    field = loc[0] if loc else message.split(':', 1)[0].split('[', 1)[0]
    if 'shape' in message or 'expected' in message or 'does not match' in message:
        return DimensionMismatchError(f"{field}: {message}" if loc else message, field=field)
    return ModelValidationError(f"{'.'.join(loc) + ': ' if loc else ''}{message}", field=field)


def validate_model(model: SystemModel, tol: Optional[Tolerance] = None) -> SystemModel:
    """
    Check the definiteness invariants of a system model.

    Args:
        model: Shape-validated model
        tol: Tolerance policy

    Returns:
        SystemModel: The same model

    Raises:
        InvariantViolationError: R not positive definite, J0 singular but nonzero,
            or every private map zero
        SingularModelError: no prior and H^T R^-1 H singular
    """
    tol = tol or Tolerance.from_settings()
    try:
        if not is_psd(model.R, tol, strict=True):
            raise InvariantViolationError("R must be symmetric positive definite", field='R')
        if model.J0 is not None:
            if not is_psd(model.J0, tol):
                raise InvariantViolationError("J0 must be positive semidefinite", field='J0')
            if not is_psd(model.J0, tol, strict=True):
                raise InvariantViolationError(
                    "J0 must be zero (no prior) or positive definite; singular priors are not supported",
                    field='J0'
                )
    except InvalidInputError as e:
        raise InvariantViolationError(e.message)

    if not any(np.any(g) for g in model.G):
        raise InvariantViolationError("at least one private map G_i must be nonzero", field='G')

    if model.J0 is None:
        info = model.H.T @ sla.solve(symmetrize(model.R), model.H, assume_a='pos')
        w = sla.eigvalsh(symmetrize(info))
        if w[0] <= tol.rank_cutoff(info.shape) * max(w[-1], np.finfo(float).tiny):
            raise SingularModelError("H^T R^-1 H is singular; the model needs a prior or more measurements")
    return model


def load_model(path: PathLike, tol: Optional[Tolerance] = None) -> SystemModel:
    """
    Load and validate a system model file.

    Args:
        path: JSON model file
        tol: Tolerance policy for the definiteness checks

    Returns:
        SystemModel: Validated model
    """
    data = _read_json(path)
    missing = [k for k in ('agent_dims', 'H', 'R', 'U', 'G') if k not in data]
    if missing:
        raise ModelValidationError(f"Missing fields in {path}: {missing}", field=missing[0])
    try:
        model = SystemModel.model_validate(data)
    except ValidationError as e:
        raise _translate(e)
    validate_model(model, tol)
    logger.info(f"Loaded model from {path}: N={model.N}, L={model.L}, S={model.S}, "
                f"{model.prior_case.value}")
    return model


def model_to_dict(model: SystemModel) -> Dict[str, Any]:
    """File-format payload of a model."""
    return {
        'agent_dims': list(model.agent_dims),
        'H': model.H.tolist(),
        'R': model.R.tolist(),
        'J0': None if model.J0 is None else model.J0.tolist(),
        'U': model.U.tolist(),
        'G': [g.tolist() for g in model.G]
    }


def save_model(model: SystemModel, path: PathLike) -> Path:
    """
    Write a model file that reloads bit-exactly.

    Args:
        model: Model to write
        path: Destination

    Returns:
        Path: The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(model_to_dict(model), f)
    logger.debug(f"Saved model to {path}")
    return path


def load_sanitization(path: PathLike, model: SystemModel) -> Sanitization:
    """
    Load a sanitization file and check it against the model's agent blocks.

    Args:
        path: JSON sanitization file
        model: Model providing agent_dims

    Returns:
        Sanitization: Validated sanitization
    """
    data = _read_json(path)
    missing = [k for k in ('C', 'Theta') if k not in data]
    if missing:
        raise ModelValidationError(f"Missing fields in {path}: {missing}", field=missing[0])
    try:
        return Sanitization(C=data['C'], Theta=data['Theta'], agent_dims=list(model.agent_dims))
    except ValidationError as e:
        raise _translate(e)


def save_sanitization(sanitization: Sanitization, path: PathLike) -> Path:
    """
    Write a sanitization file.

    Args:
        sanitization: Sanitization to write
        path: Destination

    Returns:
        Path: The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(sanitization.to_file_dict(), f)
    return path


def agent_slice(model: SystemModel, i: int) -> AgentSlice:
    """
    Rows of agent i.

    Args:
        model: System model
        i: Agent number, 1..S

    Returns:
        AgentSlice: The agent's contiguous row range
    """
    if not 1 <= i <= model.S:
        raise InvalidInputError(f"agent index {i} outside 1..{model.S}", agent_index=i)
    return model.slices()[i - 1]

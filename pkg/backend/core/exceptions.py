"""
Exception hierarchy for the sanitization designer.

Every error carries the exit code the command line reports for it.
"""

from typing import Any, Optional


class SanitizationDesignError(Exception):
    """Base class for all domain errors."""

    exit_code: int = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        """Serialize the error for a diagnostic payload."""
        return {
            'error': type(self).__name__,
            'message': self.message,
            'details': {k: repr(v) if not isinstance(v, (int, float, str, list, bool)) else v
                        for k, v in self.details.items()}
        }


class InvalidInputError(SanitizationDesignError, ValueError):
    """Non-finite, asymmetric or otherwise malformed numerical input."""

    exit_code = 1


# Model validation
class ModelValidationError(SanitizationDesignError):
    """A model or sanitization file failed to parse or validate."""

    exit_code = 2


class DimensionMismatchError(ModelValidationError):
    """Matrix dimensions disagree; `field` names the offender."""

    def __init__(self, message: str, field: Optional[str] = None, **details: Any):
        super().__init__(message, field=field, **details)
        self.field = field


class InvariantViolationError(ModelValidationError):
    """A structural invariant (definiteness, symmetry, block layout) fails."""


class SingularModelError(ModelValidationError):
    """The information matrix of the unperturbed model is singular."""


class DegenerateSanitizationError(ModelValidationError):
    """CRC^T + Theta cannot be inverted consistently."""


class DegeneratePublicMapError(ModelValidationError):
    """The public map U carries no variance, so utility is undefined."""


class WrongCaseError(SanitizationDesignError):
    """An operation for one prior case was called on the other."""

    exit_code = 2


class UnsupportedCaseError(SanitizationDesignError):
    """The model is outside what an operation supports."""

    exit_code = 2


# Infeasibility
class InfeasibleError(SanitizationDesignError):
    """The requested privacy thresholds cannot be met."""

    exit_code = 3


class ConditionsNotMetError(InfeasibleError):
    """ASUP conditions do not hold for the model."""


class LambdaCapExceededError(InfeasibleError):
    """The noise scale search reached its cap before meeting the threshold."""


class ThresholdAboveMaximumError(InfeasibleError):
    """A threshold is at or above the largest attainable privacy."""

    reason = 'threshold-at-or-above-eps-max'


class InfeasibleThresholdsError(InfeasibleError):
    """A block subproblem of the alternating optimizer has no feasible point."""


class SolverFailureError(SanitizationDesignError):
    """The SDP solver did not return a usable solution."""

    exit_code = 4

    def __init__(self, message: str, solution: Any = None, **details: Any):
        super().__init__(message, **details)
        self.solution = solution

"""
Application configuration management for the sanitization designer.

This module provides centralized configuration management with environment
variable loading, validation, and default value handling for numerical
tolerances, solver selection and experiment defaults.
"""

from pathlib import Path
from typing import Optional, Dict, Any
from pydantic import Field, field_validator, ConfigDict
from pydantic_settings import BaseSettings
import logging

# Configure logging
logger = logging.getLogger(__name__)

KNOWN_SOLVERS = ('CLARABEL', 'SCS', 'CVXOPT', 'MOSEK')


class Settings(BaseSettings):
    """
    Application settings with environment variable support and validation.
    """

    # Application Configuration
    app_name: str = Field(default="Decentralized Sanitization Designer", description="Application name")
    app_version: str = Field(default="1.0.0", description="Application version")
    debug: bool = Field(default=False, description="Debug mode")
    log_level: str = Field(default="INFO", description="Logging level")
    json_indent: int = Field(default=2, description="Indentation of JSON payloads")

    # Linear Algebra Tolerances
    rel_rank_tol: Optional[float] = Field(
        default=None,
        description="Relative singular value cutoff; None means machine epsilon times the largest dimension"
    )
    psd_tol: float = Field(default=1e-10, description="Relative eigenvalue slack for PSD checks")
    solve_tol: float = Field(default=1e-7, description="Residual tolerance for SDP solutions")
    identity_rtol: float = Field(default=1e-8, description="Relative tolerance for matrix identity checks")

    # ASUP Configuration
    asup_tol: float = Field(default=1e-8, description="Relative tolerance of the ASUP checkers")
    lambda_cap: float = Field(default=1e12, description="Largest noise scale tried by the ASUP constructions")
    lambda_bisect_steps: int = Field(default=20, description="Bisection steps after the doubling search")
    lambda_rel_precision: float = Field(default=0.01, description="Relative precision of the smallest noise scale")

    # SDP Configuration
    sdp_solver: str = Field(default="CLARABEL", description="Primary cvxpy solver")
    sdp_fallback_solver: str = Field(default="SCS", description="Solver used when the primary is not installed")
    sdp_max_iter: int = Field(default=500, description="Iteration limit passed to the solver")
    kinv_condition_limit: float = Field(
        default=1e10, description="Condition number above which the observation basis is re-orthonormalized"
    )

    # Alternating Optimization Configuration
    altopt_max_iters: int = Field(default=30, description="Maximum number of full agent sweeps")
    altopt_stop_tol: float = Field(default=1e-6, description="Utility change that ends the sweeps")
    altopt_noise_floor_scale: float = Field(default=1e-10, description="Noise floor mu relative to tr(R)/N")
    altopt_noise_cap_scale: float = Field(default=1e6, description="Largest noise variance relative to tr(R)/N")

    # Experiment Configuration
    unbounded_delta: float = Field(default=1e6, description="Power budget standing in for no power constraint")
    privacy_cap: float = Field(default=100.0, description="Truncation of reported maximum privacy")
    failure_fraction_limit: float = Field(default=0.1, description="Tolerated fraction of failed trials")
    experiment_workers: int = Field(default=4, description="Worker threads used for trials")

    @field_validator('psd_tol', 'solve_tol', 'identity_rtol', 'asup_tol', 'lambda_rel_precision',
                     'altopt_stop_tol', 'altopt_noise_floor_scale', 'altopt_noise_cap_scale')
    @classmethod
    def validate_positive_tolerance(cls, v):
        """Validate tolerances are strictly positive."""
        if v <= 0:
            raise ValueError('Tolerances must be strictly positive')
        return v

    @field_validator('rel_rank_tol')
    @classmethod
    def validate_rank_tol(cls, v):
        """Validate relative rank tolerance lies in (0, 1)."""
        if v is not None and not 0 < v < 1:
            raise ValueError('Relative rank tolerance must be between 0 and 1')
        return v

    @field_validator('lambda_cap', 'unbounded_delta', 'privacy_cap', 'kinv_condition_limit')
    @classmethod
    def validate_positive_scale(cls, v):
        """Validate scales are strictly positive."""
        if v <= 0:
            raise ValueError('Scales must be strictly positive')
        return v

    @field_validator('sdp_max_iter', 'altopt_max_iters', 'lambda_bisect_steps', 'experiment_workers')
    @classmethod
    def validate_positive_count(cls, v):
        """Validate counts are positive."""
        if v <= 0:
            raise ValueError('Counts must be positive')
        return v

    @field_validator('failure_fraction_limit')
    @classmethod
    def validate_fraction(cls, v):
        """Validate failure fraction is in [0, 1]."""
        if not 0 <= v <= 1:
            raise ValueError('Failure fraction must be between 0 and 1')
        return v

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level is valid."""
        valid_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if v.upper() not in valid_levels:
            raise ValueError(f'Log level must be one of: {valid_levels}')
        return v.upper()

    @field_validator('sdp_solver', 'sdp_fallback_solver')
    @classmethod
    def validate_solver(cls, v):
        """Validate solver name is one cvxpy can dispatch to."""
        if v.upper() not in KNOWN_SOLVERS:
            raise ValueError(f'Solver must be one of: {list(KNOWN_SOLVERS)}')
        return v.upper()

    model_config = ConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False
    )


class ConfigManager:
    """
    Configuration manager with singleton pattern and environment loading.
    """

    _instance: Optional['ConfigManager'] = None
    _settings: Optional[Settings] = None

    def __new__(cls) -> 'ConfigManager':
        """Singleton pattern implementation."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        """Initialize configuration manager."""
        if self._settings is None:
            self._load_settings()

    def _load_settings(self) -> None:
        """Load settings from environment and .env file."""
        try:
            project_root = Path(__file__).parent.parent.parent
            env_file = project_root / ".env"

            if not env_file.exists():
                logger.debug(f".env file not found at {env_file}. Using environment variables only.")

            self._settings = Settings(_env_file=str(env_file) if env_file.exists() else None)
            logger.debug("Configuration loaded successfully")

        except Exception as e:
            logger.error(f"Failed to load configuration: {e}")
            raise

    def get_settings(self) -> Settings:
        """
        Get the current settings instance.

        Returns:
            Settings: Current settings instance
        """
        if self._settings is None:
            self._load_settings()
        return self._settings

    def reload_settings(self) -> None:
        """Reload settings from environment and .env file."""
        self._settings = None
        self._load_settings()
        logger.info("Configuration reloaded")

    def override(self, **values: Any) -> Settings:
        """
        Replace selected settings for the rest of the process.

        Used by the command line to apply per-invocation flags. Values are
        re-validated through the Settings model.

        Args:
            **values: Field names and their new values; None values are ignored

        Returns:
            Settings: The updated settings instance
        """
        updates = {k: v for k, v in values.items() if v is not None}
        if updates:
            merged = self.get_settings().model_dump()
            merged.update(updates)
            self._settings = Settings.model_validate(merged)
            logger.debug(f"Settings overridden: {sorted(updates)}")
        return self._settings

    def get_tolerance_config(self) -> Dict[str, Any]:
        """
        Get tolerance configuration for the linear algebra kit.

        Returns:
            dict: Tolerance parameters
        """
        settings = self.get_settings()
        return {
            'rel_rank_tol': settings.rel_rank_tol,
            'psd_tol': settings.psd_tol,
            'solve_tol': settings.solve_tol
        }

    def get_solver_config(self) -> Dict[str, Any]:
        """
        Get SDP solver configuration.

        Returns:
            dict: Solver parameters
        """
        settings = self.get_settings()
        return {
            'solver': settings.sdp_solver,
            'fallback_solver': settings.sdp_fallback_solver,
            'max_iter': settings.sdp_max_iter,
            'tol': settings.solve_tol
        }

    def is_debug_mode(self) -> bool:
        """
        Check if debug mode is enabled.

        Returns:
            bool: True if debug mode is enabled
        """
        return self.get_settings().debug

    def get_log_level(self) -> str:
        """
        Get the current log level.

        Returns:
            str: Current log level
        """
        return self.get_settings().log_level


# Global configuration instance
_config_manager: Optional[ConfigManager] = None


def get_config() -> ConfigManager:
    """
    Get the global configuration manager instance.

    Returns:
        ConfigManager: Global configuration instance
    """
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager


def get_settings() -> Settings:
    """
    Get the current settings instance.

    Returns:
        Settings: Current settings instance
    """
    return get_config().get_settings()


def reload_config() -> None:
    """Reload configuration from environment and .env file."""
    get_config().reload_settings()


def validate_environment() -> bool:
    """
    Validate that the configured solver stack is usable.

    Returns:
        bool: True if at least one configured SDP solver is installed
    """
    try:
        import cvxpy as cp

        settings = get_settings()
        installed = set(cp.installed_solvers())
        usable = [s for s in (settings.sdp_solver, settings.sdp_fallback_solver) if s in installed]

        if not usable:
            logger.error(f"No configured SDP solver installed; available: {sorted(installed)}")
            return False

        logger.info(f"Environment validation passed, solvers available: {usable}")
        return True

    except Exception as e:
        logger.error(f"Environment validation failed: {e}")
        return False


def setup_logging(level: Optional[str] = None) -> None:
    """
    Setup logging configuration based on settings.

    Args:
        level: Optional level overriding the configured one
    """
    config = get_config()
    level_name = (level or config.get_log_level()).upper()
    log_level = getattr(logging, level_name)

    # Configure root logger
    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        force=True
    )

    # Set specific logger levels
    if config.is_debug_mode():
        logging.getLogger('cvxpy').setLevel(logging.DEBUG)
    else:
        logging.getLogger('cvxpy').setLevel(logging.WARNING)

    logger.debug(f"Logging configured with level: {level_name}")

"""
Randomized numerical studies over seeded system models.

Each figure sweeps a grid of agent counts and public-map sizes, draws
`trials` random models per grid point and averages one statistic: maximum
privacy at perfect utility (figures 1 and 2), optimized utility against the
privacy threshold (figure 3) or utility per sweep of the alternating
optimizer (figure 4).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union
import logging

import numpy as np
import pandas as pd

from ..core.config import get_settings
from ..core.exceptions import InvariantViolationError, SanitizationDesignError, SolverFailureError
from ..models import ExperimentSpec, PriorMode, PrivacyRequest, SystemModel
from ..utils.linalg import Tolerance, is_psd, spd_inverse
from ..utils.model_io import validate_model
from .alternating_optimizer import alternating_optimize
from .asup_engine import check_asup
from .crlb import eps_max, tradeoff_report
from .privacy_sdp import max_privacy

# Configure logging
logger = logging.getLogger(__name__)

CSV_COLUMNS = ['figure', 'S', 'U_dim', 'eps', 'iteration', 'value', 'n_trials', 'n_failed']
TRIAL_COLUMNS = ['figure', 'S', 'U_dim', 'eps', 'iteration', 'trial', 'value', 'eps_max', 'error']
MARKER_ITERATION = -1
MAX_R_DRAWS = 10

# Failures counted against failure_fraction_limit instead of aborting the figure.
TRIAL_ERRORS = (SanitizationDesignError, np.linalg.LinAlgError, ValueError, ArithmeticError)


def trial_generator(seed: int, trial_index: int) -> np.random.Generator:
    """Philox stream keyed by (seed, trial_index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial_index])))


def gen_random_model(spec: ExperimentSpec, trial_index: int, S: Optional[int] = None,
                     U_dim: Optional[int] = None, prior: Optional[PriorMode] = None) -> SystemModel:
    """
    Seeded random model of one trial.

    R = A A^T and H with entries uniform on [-0.5, 0.5]; P0 = A A^T with
    entries uniform on [-10, 10]; U and one private map G shared by all
    agents, uniform on [-0.5, 0.5]. Every grid point of a trial uses the same
    draws, U being the leading rows of a max(U_dim_values) x L draw.

    Args:
        spec: Experiment settings
        trial_index: Trial number
        S: Agent count (defaults to the first of spec.S_values)
        U_dim: Public map rows (defaults to the first of spec.U_dim_values)
        prior: Prior mode (defaults to spec.prior)

    Returns:
        SystemModel: Validated model with N/S measurements per agent
    """
    S = S or spec.S_values[0]
    U_dim = U_dim or spec.U_dim_values[0]
    prior = prior or spec.prior
    if spec.N % S:
        raise InvariantViolationError(f"N={spec.N} is not divisible by S={S}")
    N, L = spec.N, spec.L
    rng = trial_generator(spec.seed, trial_index)
    tol = Tolerance.from_settings()

    for attempt in range(MAX_R_DRAWS):
        A = rng.uniform(-0.5, 0.5, size=(N, N))
        R = A @ A.T
        if is_psd(R, tol, strict=True):
            break
        logger.warning(f"Trial {trial_index}: singular R draw {attempt + 1}, resampling")
    else:
        raise InvariantViolationError(f"trial {trial_index}: no positive definite R in {MAX_R_DRAWS} draws")

    H = rng.uniform(-0.5, 0.5, size=(N, L))
    A0 = rng.uniform(-10.0, 10.0, size=(L, L))
    U_full = rng.uniform(-0.5, 0.5, size=(max(spec.U_dim_values + [U_dim]), L))
    G = rng.uniform(-0.5, 0.5, size=(spec.G_dim, L))

    model = SystemModel(
        agent_dims=[N // S] * S,
        H=H,
        R=R,
        J0=spd_inverse(A0 @ A0.T) if prior == PriorMode.RANDOM_PD else None,
        U=U_full[:U_dim],
        G=[G] * S
    )
    return validate_model(model, tol)


@dataclass
class TrialOutcome:
    """Statistic of one trial; None marks a failed trial."""
    trial: int
    value: Any
    error: Optional[str] = None


class ExperimentRunner:
    """
    Runs the randomized figure studies and tabulates their averages.
    """

    def __init__(self):
        """Initialize the experiment runner."""
        logger.info("Experiment runner initialized")

    def _map_trials(self, spec: ExperimentSpec, task: Callable[[int], Any], label: str) -> List[TrialOutcome]:
        def guarded(trial: int) -> TrialOutcome:
            try:
                return TrialOutcome(trial=trial, value=task(trial))
            except TRIAL_ERRORS as e:
                message = getattr(e, 'message', None) or str(e)
                logger.warning(f"{label}, trial {trial} failed: {type(e).__name__}: {message}")
                return TrialOutcome(trial=trial, value=None, error=type(e).__name__)

        workers = get_settings().experiment_workers
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(guarded, range(spec.trials)))
        else:
            outcomes = [guarded(t) for t in range(spec.trials)]
        outcomes.sort(key=lambda o: o.trial)

        failed = sum(o.value is None for o in outcomes)
        if failed > get_settings().failure_fraction_limit * spec.trials:
            raise SolverFailureError(f"{label}: {failed} of {spec.trials} trials failed", failed=failed)
        return outcomes

    # Per-trial statistics

    def max_privacy_trial(self, spec: ExperimentSpec, trial: int, S: int, U_dim: int,
                          prior: PriorMode, cap: Optional[float]) -> Dict[str, float]:
        """Maximum privacy of agent 1 at perfect utility without a power constraint."""
        model = gen_random_model(spec, trial, S, U_dim, prior)
        bound = eps_max(model, 1)
        if not model.has_prior and check_asup(model).achievable:
            return {'privacy': float(cap if cap is not None else np.inf), 'eps_max': bound, 'asup': True}
        privacy = max_privacy(model, get_settings().unbounded_delta).privacy[0]
        if cap is not None:
            privacy = min(privacy, cap)
        return {'privacy': privacy, 'eps_max': bound, 'asup': False}

    def utility_trial(self, spec: ExperimentSpec, trial: int, S: int, U_dim: int,
                      eps: Optional[float]) -> Dict[str, float]:
        """Optimized utility at a privacy threshold; eps None uses the trial's own max privacy."""
        model = gen_random_model(spec, trial, S, U_dim)
        threshold = eps
        if threshold is None:
            threshold = max(max_privacy(model, get_settings().unbounded_delta).privacy[0], 0.0)
        sanitization, _ = alternating_optimize(model, PrivacyRequest.uniform(model.S, threshold), spec.max_iters)
        return {'eps': threshold, 'utility': tradeoff_report(model, sanitization).utility}

    def iteration_trial(self, spec: ExperimentSpec, trial: int, S: int, U_dim: int) -> List[float]:
        """Utility at the end of every sweep, padded to max_iters with the last value."""
        model = gen_random_model(spec, trial, S, U_dim)
        _, trace = alternating_optimize(model, PrivacyRequest.uniform(model.S, spec.eps_iteration), spec.max_iters)
        utilities = trace.sweep_utilities()
        return utilities + [utilities[-1]] * (spec.max_iters + 1 - len(utilities))

    # Figures

    def run_figure(self, figure: int, spec: ExperimentSpec) -> pd.DataFrame:
        """
        Table of one figure with columns figure, S, U_dim, eps, iteration, value, n_trials, n_failed.

        Args:
            figure: 1 (no prior, capped), 2 (with prior), 3 (utility against
                eps, with a max-privacy marker row at iteration -1) or
                4 (utility per sweep)
            spec: Experiment settings

        Returns:
            pd.DataFrame: One row per grid point (and per eps or sweep)
        """
        frame, _ = self.run_figure_trials(figure, spec)
        return frame

    def run_figure_trials(self, figure: int, spec: ExperimentSpec) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """
        Figure table together with the per-trial values behind its means.

        Args:
            figure: Figure number, 1..4
            spec: Experiment settings

        Returns:
            Tuple[pd.DataFrame, pd.DataFrame]: The run_figure table and one
            row per trial (TRIAL_COLUMNS); eps_max is filled for figures 1
            and 2, value is empty for failed trials
        """
        if figure not in (1, 2, 3, 4):
            raise ValueError(f"figure must be 1, 2, 3 or 4, got {figure}")
        logger.info(f"Running figure {figure}: N={spec.N}, L={spec.L}, S={spec.S_values}, "
                    f"U_dim={spec.U_dim_values}, trials={spec.trials}, seed={spec.seed}")
        rows, records = [], []
        for S in spec.S_values:
            for U_dim in spec.U_dim_values:
                rows.extend(self._grid_point(figure, spec, S, U_dim, records))
        frame = pd.DataFrame.from_records(rows, columns=CSV_COLUMNS)
        frame['iteration'] = frame['iteration'].astype('Int64')
        trials = pd.DataFrame.from_records(records, columns=TRIAL_COLUMNS)
        trials['iteration'] = trials['iteration'].astype('Int64')
        return frame, trials

    def _grid_point(self, figure: int, spec: ExperimentSpec, S: int, U_dim: int,
                    records: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
        label = f"figure {figure}, S={S}, U_dim={U_dim}"

        def row(value, n_failed, eps=None, iteration=None):
            return {'figure': figure, 'S': S, 'U_dim': U_dim, 'eps': eps, 'iteration': iteration,
                    'value': value, 'n_trials': spec.trials, 'n_failed': n_failed}

        def record(outcome: TrialOutcome, key: str, eps=None, iteration=None):
            value = outcome.value[key] if outcome.value is not None else None
            bound = outcome.value.get('eps_max') if outcome.value is not None else None
            records.append({'figure': figure, 'S': S, 'U_dim': U_dim, 'eps': eps, 'iteration': iteration,
                            'trial': outcome.trial, 'value': value, 'eps_max': bound, 'error': outcome.error})

        def mean(outcomes: List[TrialOutcome], key: str) -> Optional[float]:
            values = [o.value[key] for o in outcomes if o.value is not None]
            if not values:
                logger.warning(f"{label}: every trial failed, no mean of {key}")
                return None
            return float(np.mean(values))

        def failures(outcomes: List[TrialOutcome]) -> int:
            return sum(o.value is None for o in outcomes)

        if figure in (1, 2):
            prior = PriorMode.NONE if figure == 1 else PriorMode.RANDOM_PD
            cap = spec.privacy_cap if figure == 1 else None
            outcomes = self._map_trials(
                spec, lambda t: self.max_privacy_trial(spec, t, S, U_dim, prior, cap), label
            )
            for o in outcomes:
                record(o, 'privacy')
            if figure == 2:
                over = [o.trial for o in outcomes
                        if o.value is not None and o.value['privacy'] >= o.value['eps_max']]
                if over:
                    logger.warning(f"{label}: max privacy reached eps_max in trials {over}")
            return [row(mean(outcomes, 'privacy'), failures(outcomes))]

        if figure == 3:
            rows = []
            for eps in spec.eps_values:
                outcomes = self._map_trials(spec, lambda t: self.utility_trial(spec, t, S, U_dim, eps),
                                            f"{label}, eps={eps}")
                for o in outcomes:
                    record(o, 'utility', eps=eps)
                rows.append(row(mean(outcomes, 'utility'), failures(outcomes), eps=eps))
            marker = self._map_trials(spec, lambda t: self.utility_trial(spec, t, S, U_dim, None),
                                      f"{label}, max-privacy marker")
            for o in marker:
                record(o, 'utility', eps=o.value['eps'] if o.value is not None else None,
                       iteration=MARKER_ITERATION)
            rows.append(row(mean(marker, 'utility'), failures(marker), eps=mean(marker, 'eps'),
                            iteration=MARKER_ITERATION))
            return rows

        outcomes = self._map_trials(spec, lambda t: self.iteration_trial(spec, t, S, U_dim), label)
        sweeps = range(spec.max_iters + 1)
        for o in outcomes:
            for k in sweeps:
                records.append({'figure': figure, 'S': S, 'U_dim': U_dim, 'eps': spec.eps_iteration,
                                'iteration': k, 'trial': o.trial,
                                'value': o.value[k] if o.value is not None else None,
                                'eps_max': None, 'error': o.error})
        traces = [o.value for o in outcomes if o.value is not None]
        if traces:
            means = [float(v) for v in np.mean(np.array(traces), axis=0)]
        else:
            logger.warning(f"{label}: every trial failed, no utility trace")
            means = [None] * len(sweeps)
        return [row(value, failures(outcomes), eps=spec.eps_iteration, iteration=k)
                for k, value in zip(sweeps, means)]


# Global experiment runner instance
_experiment_runner_instance: Optional[ExperimentRunner] = None


def get_experiment_runner() -> ExperimentRunner:
    """
    Get the global experiment runner instance.

    Returns:
        ExperimentRunner: Global experiment runner instance
    """
    global _experiment_runner_instance
    if _experiment_runner_instance is None:
        _experiment_runner_instance = ExperimentRunner()
    return _experiment_runner_instance


def run_figure(figure: int, spec: ExperimentSpec) -> pd.DataFrame:
    return get_experiment_runner().run_figure(figure, spec)


def run_figure_trials(figure: int, spec: ExperimentSpec) -> Tuple[pd.DataFrame, pd.DataFrame]:
    return get_experiment_runner().run_figure_trials(figure, spec)


def format_figure_csv(frame: pd.DataFrame) -> str:
    """CSV text of a figure table."""
    return frame.to_csv(index=False, columns=CSV_COLUMNS, lineterminator='\n')


def write_figure_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """
    Write a figure table.

    Args:
        frame: Output of run_figure
        path: Destination file

    Returns:
        Path: The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_figure_csv(frame), encoding='utf-8')
    return path

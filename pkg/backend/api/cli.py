"""
Command-line surface of the sanitization designer.

Commands:
    check-asup   Decide whether arbitrarily strong utility-privacy tradeoff is achievable
    construct    Build perfect-utility noise meeting privacy thresholds
    max-privacy  Maximize privacy at perfect utility under noise power budgets
    altopt       Trade utility for privacy by alternating block optimization
    simulate     Regenerate one randomized figure table as CSV

Structured results go to stdout as JSON (CSV for simulate); logs go to stderr.
Exit codes: 0 ok, 1 usage, 2 model-invalid, 3 infeasible, 4 solver-failure.
"""

import argparse
import json
import logging
import math
import sys
from typing import Any, Dict, List, Optional

from ..core.config import get_config, setup_logging
from ..core.exceptions import SanitizationDesignError
from ..models import CommandResult, ExperimentSpec, PrivacyRequest, Sanitization, SystemModel
from ..services.alternating_optimizer import alternating_optimize, write_trace_csv
from ..services.asup_engine import check_asup, get_asup_engine
from ..services.crlb import tradeoff_report
from ..services.experiment_runner import format_figure_csv, run_figure, write_figure_csv
from ..services.privacy_sdp import get_privacy_designer
from ..services.sdp_solver import dump_sdp
from ..utils.model_io import load_model, save_sanitization

# Configure logging
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER_FAILURE = 4


class UsageError(Exception):
    """Malformed command line."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is the model-invalid code here.
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    parser = _Parser(prog="sanitize-design", description="Design decentralized privacy sanitizations.")
    parser.add_argument("--tol", type=float, help="Relative tolerance of checkers and SDP residuals")
    parser.add_argument("--seed", type=int, help="Base seed of randomized experiments")
    parser.add_argument("--json-indent", type=int, help="Indentation of JSON payloads")
    parser.add_argument("--log-level", choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    check = commands.add_parser("check-asup", help="ASUP verdict with per-agent diagnostics")
    check.add_argument("model_path")

    construct = commands.add_parser("construct", help="ASUP noise construction")
    construct.add_argument("model_path")
    construct.add_argument("--eps", type=float, nargs='+', required=True, help="Threshold per agent (one broadcasts)")
    construct.add_argument("--lambda-cap", type=float, help="Largest noise scale tried")
    construct.add_argument("--strategy", choices=['witness', 'own-agent'], default='witness')
    construct.add_argument("--partial", action="store_true",
                           help="With prior: agents failing the residual condition add no noise")
    construct.add_argument("--output", help="Also write the sanitization file here")

    privacy = commands.add_parser("max-privacy", help="Maximum privacy at perfect utility")
    privacy.add_argument("model_path")
    budgets = privacy.add_mutually_exclusive_group()
    budgets.add_argument("--delta", type=float, nargs='+', help="Noise power budget per agent (one broadcasts)")
    budgets.add_argument("--delta-unbounded", action="store_true", help="Use the unbounded budget stand-in")
    privacy.add_argument("--normalized", action="store_true", help="Normalize each agent's objective term")
    privacy.add_argument("--dump-sdp", help="Write the SDP in text form here")
    privacy.add_argument("--output", help="Also write the sanitization file here")

    altopt = commands.add_parser("altopt", help="Alternating block optimization of utility")
    altopt.add_argument("model_path")
    altopt.add_argument("--eps", type=float, nargs='+', required=True, help="Threshold per agent (one broadcasts)")
    altopt.add_argument("--max-iters", type=int, help="Maximum number of sweeps")
    altopt.add_argument("--trace-csv", help="Write the iteration trace here")
    altopt.add_argument("--output", help="Also write the sanitization file here")

    simulate = commands.add_parser("simulate", help="Randomized figure table as CSV")
    simulate.add_argument("--figure", type=int, choices=[1, 2, 3, 4], required=True)
    simulate.add_argument("--trials", type=int, help="Random models per data point")
    simulate.add_argument("--paper-scale", action="store_true", help="N=72, L=12, 100 trials")
    simulate.add_argument("--output", help="Write the CSV here instead of stdout")
    return parser


def _finite_or_null(value: Any) -> Any:
    """Replace inf and NaN floats with None so the payload is strict JSON."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _finite_or_null(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_null(v) for v in value]
    return value


def _dumps(payload: Dict[str, Any]) -> str:
    indent = get_config().get_settings().json_indent
    return json.dumps(_finite_or_null(payload), indent=indent if indent > 0 else None, allow_nan=False)


def _design_payload(model: SystemModel, sanitization: Sanitization) -> Dict[str, Any]:
    report = tradeoff_report(model, sanitization)
    return {
        'sanitization': sanitization.to_file_dict(),
        'report': {'utility': report.utility, 'privacy': report.privacy, 'eps_max': report.eps_max}
    }


def _request(model: SystemModel, eps: List[float]) -> PrivacyRequest:
    return PrivacyRequest(eps=eps).for_model(model)


def cmd_check_asup(args: argparse.Namespace) -> str:
    model = load_model(args.model_path)
    verdict = check_asup(model, args.tol)
    return _dumps(verdict.model_dump(mode='json'))


def cmd_construct(args: argparse.Namespace) -> str:
    model = load_model(args.model_path)
    result = get_asup_engine().construct(model, _request(model, args.eps), args.lambda_cap, args.strategy,
                                         args.partial)
    if args.output:
        save_sanitization(result.sanitization, args.output)
    payload = _design_payload(model, result.sanitization)
    payload['agents'] = [a.model_dump(mode='json', exclude_none=True) for a in result.agents]
    return _dumps(payload)


def cmd_max_privacy(args: argparse.Namespace) -> str:
    model = load_model(args.model_path)
    designer = get_privacy_designer()
    layout = designer.build_problem(model, None if args.delta_unbounded else args.delta, args.normalized)
    if args.dump_sdp:
        dump_sdp(layout.problem, args.dump_sdp)
    result = designer.solve(layout)
    if args.output:
        save_sanitization(result.sanitization, args.output)
    payload = _design_payload(model, result.sanitization)
    payload.update({
        'objective_value': result.objective_value,
        'delta': result.delta,
        'normalized': result.normalized,
        'status': result.status.value,
        'active_agents': result.active_agents
    })
    return _dumps(payload)


def cmd_altopt(args: argparse.Namespace) -> str:
    model = load_model(args.model_path)
    sanitization, trace = alternating_optimize(model, _request(model, args.eps), args.max_iters)
    if args.trace_csv:
        write_trace_csv(trace, args.trace_csv)
    if args.output:
        save_sanitization(sanitization, args.output)
    payload = _design_payload(model, sanitization)
    payload['trace'] = trace.model_dump(mode='json')
    return _dumps(payload)


def cmd_simulate(args: argparse.Namespace) -> str:
    overrides = {k: v for k, v in (('trials', args.trials), ('seed', args.seed)) if v is not None}
    preset = ExperimentSpec.paper_scale if args.paper_scale else ExperimentSpec.desk_scale
    spec = preset(args.figure, **overrides)
    frame = run_figure(args.figure, spec)
    if args.output:
        write_figure_csv(frame, args.output)
        return ""
    return format_figure_csv(frame).rstrip('\n')


COMMANDS = {
    'check-asup': cmd_check_asup,
    'construct': cmd_construct,
    'max-privacy': cmd_max_privacy,
    'altopt': cmd_altopt,
    'simulate': cmd_simulate,
}


def run(argv: Optional[List[str]] = None, configure_logging: bool = False) -> CommandResult:
    """
    Execute one command and capture its outcome.

    Global flags override the settings for this invocation only.

    Args:
        argv: Arguments without the program name
        configure_logging: Route logging to stderr at the requested level

    Returns:
        CommandResult: Exit code, payload and diagnostic
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        return CommandResult(exit_code=EXIT_USAGE, stderr=str(e))

    config = get_config()
    previous = config.get_settings().model_dump()
    try:
        config.override(asup_tol=args.tol, solve_tol=args.tol, json_indent=args.json_indent,
                        log_level=args.log_level)
        if configure_logging:
            setup_logging(args.log_level)
        stdout = COMMANDS[args.command](args)
        return CommandResult(exit_code=EXIT_OK, stdout=stdout)

    except SanitizationDesignError as e:
        reason = getattr(e, 'reason', None)
        logger.warning(f"{args.command} failed: {e.message}")
        return CommandResult(exit_code=e.exit_code,
                             stderr=f"{reason}: {e.message}" if reason else f"{type(e).__name__}: {e.message}")
    except ValueError as e:
        return CommandResult(exit_code=EXIT_USAGE, stderr=f"{type(e).__name__}: {e}")
    except Exception as e:
        logger.error(f"{args.command} failed unexpectedly: {e}")
        return CommandResult(exit_code=EXIT_SOLVER_FAILURE, stderr=f"{type(e).__name__}: {e}")
    finally:
        config.override(**previous)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command, print its payload and return its exit code."""
    result = run(argv, configure_logging=True)
    if result.stdout:
        print(result.stdout)
    if result.stderr:
        print(result.stderr, file=sys.stderr)
    return result.exit_code

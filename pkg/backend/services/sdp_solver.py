"""
Dense semidefinite programming on top of cvxpy.

This module translates SdpProblem instances into cvxpy problems, solves them
with the configured conic solver, re-checks the returned point against the
problem's own constraints and writes plain-text problem dumps.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union
import logging

import cvxpy as cp
import numpy as np
from scipy import linalg as sla

from ..core.config import get_config
from ..models import KktResiduals, LinearFunctional, SdpProblem, SdpSolution, SdpStatus, Sense

# Configure logging
logger = logging.getLogger(__name__)

_STATUS_MAP = {
    cp.OPTIMAL: SdpStatus.OPTIMAL,
    cp.OPTIMAL_INACCURATE: SdpStatus.INACCURATE,
    cp.INFEASIBLE: SdpStatus.INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: SdpStatus.INFEASIBLE,
    cp.UNBOUNDED: SdpStatus.UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: SdpStatus.UNBOUNDED,
    cp.USER_LIMIT: SdpStatus.MAX_ITER,
}


def _solver_options(solver: str, tol: float, max_iter: int) -> Dict[str, Any]:
    inner = min(0.1 * tol, 1e-8)
    if solver == 'CLARABEL':
        return {'max_iter': max_iter, 'tol_gap_abs': inner, 'tol_gap_rel': inner, 'tol_feas': inner}
    if solver == 'SCS':
        return {'max_iters': max_iter * 20, 'eps_abs': inner, 'eps_rel': inner}
    return {}


def _min_eig(A: np.ndarray) -> float:
    if A.size == 0:
        return 0.0
    return float(sla.eigvalsh(0.5 * (A + A.T))[0])


class _Translation:
    """cvxpy variables and constraints of one SdpProblem."""

    def __init__(self, problem: SdpProblem):
        self.problem = problem
        self.blocks = [
            cp.Variable((b.dim, b.dim), symmetric=True, name=b.name or f"X{k}")
            for k, b in enumerate(problem.blocks)
        ]
        self.cone = [(k, X >> 0) for k, X in enumerate(self.blocks) if problem.blocks[k].psd]
        self.equalities = [self.functional(c.functional) == c.rhs for c in problem.equality_constraints]
        self.inequalities = [self.functional(c.functional) <= c.rhs for c in problem.inequality_constraints]

        self.slacks, self.lmi_links, self.lmi_cones = [], [], []
        for idx, lmi in enumerate(problem.lmi_constraints):
            expr = lmi.constant
            for term in lmi.terms:
                expr = expr + term.sign * (term.left @ self.blocks[term.block] @ term.left.T)
            S = cp.Variable((lmi.size, lmi.size), symmetric=True, name=lmi.name or f"lmi{idx}")
            self.slacks.append(S)
            self.lmi_links.append(S == expr)
            self.lmi_cones.append(S >> 0)

        objective = self.functional(problem.objective)
        goal = cp.Maximize(objective) if problem.sense == Sense.MAXIMIZE else cp.Minimize(objective)
        constraints = ([c for _, c in self.cone] + self.equalities + self.inequalities
                       + self.lmi_links + self.lmi_cones)
        self.cvx = cp.Problem(goal, constraints)

    def functional(self, functional: LinearFunctional):
        if not functional.terms:
            return cp.Constant(0.0)
        return sum(cp.trace(term.coeff @ self.blocks[term.block]) for term in functional.terms)


def _evaluate(functional: LinearFunctional, values: List[np.ndarray]) -> float:
    return float(sum(np.sum(term.coeff * values[term.block]) for term in functional.terms))


def lmi_value(problem: SdpProblem, index: int, values: List[np.ndarray]) -> np.ndarray:
    """Matrix of LMI `index` at the given block values."""
    lmi = problem.lmi_constraints[index]
    out = np.array(lmi.constant, dtype=float)
    for term in lmi.terms:
        out = out + term.sign * (term.left @ values[term.block] @ term.left.T)
    return 0.5 * (out + out.T)


def _residuals(translation: _Translation, values: List[np.ndarray]) -> KktResiduals:
    """Relative primal, dual and complementarity residuals of a returned point."""
    problem = translation.problem
    primal, dual, comp = [0.0], [0.0], 0.0

    for c in problem.equality_constraints:
        primal.append(abs(_evaluate(c.functional, values) - c.rhs) / (1.0 + abs(c.rhs)))
    for c, con in zip(problem.inequality_constraints, translation.inequalities):
        slack = c.rhs - _evaluate(c.functional, values)
        primal.append(max(-slack, 0.0) / (1.0 + abs(c.rhs)))
        y = float(np.asarray(con.dual_value if con.dual_value is not None else 0.0))
        dual.append(max(-y, 0.0) / (1.0 + abs(y)))
        comp += abs(y * slack)

    for k, con in translation.cone:
        X = values[k]
        primal.append(max(-_min_eig(X), 0.0) / (1.0 + sla.norm(X, 2)))
        if con.dual_value is not None:
            D = np.asarray(con.dual_value)
            dual.append(max(-_min_eig(D), 0.0) / (1.0 + sla.norm(D, 2)))
            comp += abs(float(np.sum(X * D)))

    for idx, con in enumerate(translation.lmi_cones):
        M = lmi_value(problem, idx, values)
        primal.append(max(-_min_eig(M), 0.0) / (1.0 + sla.norm(problem.lmi_constraints[idx].constant, 2)))
        if con.dual_value is not None:
            D = np.asarray(con.dual_value)
            dual.append(max(-_min_eig(D), 0.0) / (1.0 + sla.norm(D, 2)))
            comp += abs(float(np.sum(M * D)))

    objective = _evaluate(problem.objective, values)
    return KktResiduals(primal=float(max(primal)), dual=float(max(dual)),
                        gap=float(comp / (1.0 + abs(objective))))


class SdpSolver:
    """
    SDP front end dispatching to the configured cvxpy solver.
    """

    def __init__(self):
        """Initialize the SDP solver."""
        self.installed = set(cp.installed_solvers())
        logger.info(f"SDP solver initialized, installed backends: {sorted(self.installed)}")

    def _candidates(self) -> List[str]:
        config = get_config().get_solver_config()
        names = [config['solver'], config['fallback_solver']]
        usable = [n for i, n in enumerate(names) if n in self.installed and n not in names[:i]]
        if not usable:
            logger.warning(f"Configured solvers {names} not installed; letting cvxpy choose")
            return [None]
        if usable[0] != names[0]:
            logger.warning(f"Solver {names[0]} not installed, using {usable[0]}")
        return usable

    def solve(self, problem: SdpProblem, tol: Optional[float] = None,
              max_iter: Optional[int] = None) -> SdpSolution:
        """
        Solve an SDP and grade the returned point.

        Args:
            problem: Problem to solve
            tol: Residual tolerance for reporting `optimal`
            max_iter: Solver iteration limit

        Returns:
            SdpSolution: Block values, objective and status. `optimal` only
            when every recomputed residual is within tol; `inaccurate` for
            usable points outside it
        """
        config = get_config().get_solver_config()
        tol = tol if tol is not None else config['tol']
        max_iter = max_iter if max_iter is not None else config['max_iter']

        translation = _Translation(problem)
        status, solver_used, last_error = SdpStatus.MAX_ITER, "", None
        for solver in self._candidates():
            try:
                options = _solver_options(solver, tol, max_iter) if solver else {}
                translation.cvx.solve(solver=solver, **options)
                solver_used = solver or str(translation.cvx.solver_stats.solver_name)
                status = _STATUS_MAP.get(translation.cvx.status, SdpStatus.MAX_ITER)
                break
            except cp.error.SolverError as e:
                last_error = e
                logger.warning(f"Solver {solver} failed on '{problem.name}': {e}")
            except (KeyboardInterrupt, SystemExit, GeneratorExit):
                raise
            except BaseException as e:
                # Rust-backed solvers surface internal panics as BaseException subclasses.
                last_error = e
                logger.warning(f"Solver {solver} panicked on '{problem.name}': {type(e).__name__}: {e}")

        values = [X.value for X in translation.blocks]
        if any(v is None for v in values):
            if last_error is not None:
                logger.error(f"No solver produced a point for '{problem.name}'")
            return SdpSolution(status=status, solver=solver_used)

        values = [0.5 * (v + v.T) for v in values]
        residuals = _residuals(translation, values)
        if status == SdpStatus.OPTIMAL and not residuals.within(tol):
            logger.warning(f"'{problem.name}' solved to residuals {residuals.model_dump()} above tol={tol:g}")
            status = SdpStatus.INACCURATE

        stats = translation.cvx.solver_stats
        solution = SdpSolution(
            blocks=values,
            objective_value=_evaluate(problem.objective, values),
            status=status,
            kkt_residuals=residuals,
            solver=solver_used,
            iterations=getattr(stats, 'num_iters', None)
        )
        logger.info(f"Solved '{problem.name}' with {solver_used}: status={status.value}, "
                    f"objective={solution.objective_value:.6g}")
        return solution


def _fmt(matrix: np.ndarray) -> str:
    return json.dumps(np.asarray(matrix, dtype=float).tolist(), separators=(',', ':'))


def format_sdp(problem: SdpProblem) -> str:
    """Plain-text rendering, one block or constraint per line, matrices row-major."""
    lines = [f"sdp {problem.name}", f"sense {problem.sense.value}"]
    for k, block in enumerate(problem.blocks):
        lines.append(f"block {k} dim={block.dim} psd={str(block.psd).lower()} name={block.name or '-'}")

    def terms(functional: LinearFunctional) -> str:
        return ' '.join(f"[{t.block}]{_fmt(t.coeff)}" for t in functional.terms)

    lines.append(f"objective {terms(problem.objective)}")
    for c in problem.equality_constraints:
        lines.append(f"eq {c.name or '-'} rhs={c.rhs!r} {terms(c.functional)}")
    for c in problem.inequality_constraints:
        lines.append(f"le {c.name or '-'} rhs={c.rhs!r} {terms(c.functional)}")
    for lmi in problem.lmi_constraints:
        parts = ' '.join(f"[{t.block}]{t.sign!r}*{_fmt(t.left)}" for t in lmi.terms)
        lines.append(f"lmi {lmi.name or '-'} constant={_fmt(lmi.constant)} {parts}")
    return '\n'.join(lines) + '\n'


# Global SDP solver instance
_sdp_solver_instance: Optional[SdpSolver] = None


def get_sdp_solver() -> SdpSolver:
    """
    Get the global SDP solver instance.

    Returns:
        SdpSolver: Global SDP solver instance
    """
    global _sdp_solver_instance
    if _sdp_solver_instance is None:
        _sdp_solver_instance = SdpSolver()
    return _sdp_solver_instance


def solve_sdp(problem: SdpProblem, tol: Optional[float] = None, max_iter: Optional[int] = None) -> SdpSolution:
    return get_sdp_solver().solve(problem, tol, max_iter)


def dump_sdp(problem: SdpProblem, path: Union[str, Path]) -> Path:
    """
    Write the text dump of a problem.

    Args:
        problem: Problem to dump
        path: Destination file

    Returns:
        Path: The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_sdp(problem), encoding='utf-8')
    logger.debug(f"Dumped '{problem.name}' to {path}")
    return path

"""
Tests for the cvxpy-backed SDP front end.
"""

from unittest.mock import patch

import cvxpy as cp
import numpy as np
import pytest
from pydantic import ValidationError

from backend.models import (
    FunctionalTerm,
    KktResiduals,
    LinearConstraint,
    LinearFunctional,
    LmiConstraint,
    LmiTerm,
    SdpProblem,
    SdpStatus,
    Sense,
    VariableBlock,
)
from backend.services.sdp_solver import SdpSolver, dump_sdp, format_sdp, lmi_value, solve_sdp


class _SolverPanic(BaseException):
    """Same base class as the panics raised by compiled solver bindings."""


@pytest.fixture
def box_problem() -> SdpProblem:
    """max tr(Z) subject to 0 <= Z <= I2."""
    return SdpProblem(
        blocks=[VariableBlock(dim=2, name="Z")],
        objective=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=np.eye(2))]),
        lmi_constraints=[LmiConstraint(constant=np.eye(2), terms=[LmiTerm(block=0, left=np.eye(2), sign=-1.0)],
                                       name="upper")],
        name="box"
    )


@pytest.fixture
def correlation_problem() -> SdpProblem:
    """max z subject to [[1, z], [z, 1]] PSD, written with two congruence terms."""
    a = np.array([[1.0], [1.0]]) / np.sqrt(2)
    b = np.array([[1.0], [-1.0]]) / np.sqrt(2)
    return SdpProblem(
        blocks=[VariableBlock(dim=1, psd=False, name="z")],
        objective=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=[[1.0]])]),
        lmi_constraints=[LmiConstraint(constant=np.eye(2), terms=[
            LmiTerm(block=0, left=a, sign=1.0),
            LmiTerm(block=0, left=b, sign=-1.0),
        ])],
        name="correlation"
    )


class TestSolve:
    """Test solving small SDPs with known optima."""

    def test_box(self, box_problem):
        """Test the box problem reaches tr(Z) = 2."""
        solution = solve_sdp(box_problem)

        assert solution.status.usable
        assert solution.objective_value == pytest.approx(2.0, abs=1e-6)
        np.testing.assert_allclose(solution.blocks[0], np.eye(2), atol=1e-5)
        assert solution.kkt_residuals is not None

    def test_free_block_lmi(self, correlation_problem):
        """Test the correlation bound z <= 1."""
        solution = solve_sdp(correlation_problem)

        assert solution.status.usable
        assert solution.objective_value == pytest.approx(1.0, abs=1e-6)
        assert np.linalg.eigvalsh(lmi_value(correlation_problem, 0, solution.blocks))[0] >= -1e-6

    def test_minimize_with_equality(self):
        """Test min X_11 subject to tr(X) = 3 and X PSD gives 0."""
        problem = SdpProblem(
            blocks=[VariableBlock(dim=2)],
            objective=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=np.diag([1.0, 0.0]))]),
            sense=Sense.MINIMIZE,
            equality_constraints=[LinearConstraint(
                functional=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=np.eye(2))]), rhs=3.0
            )]
        )
        solution = solve_sdp(problem)

        assert solution.status.usable
        assert solution.objective_value == pytest.approx(0.0, abs=1e-6)
        assert np.trace(solution.blocks[0]) == pytest.approx(3.0, abs=1e-6)

    def test_infeasible(self):
        """Test a PSD block with negative trace is infeasible."""
        problem = SdpProblem(
            blocks=[VariableBlock(dim=1)],
            objective=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=[[1.0]])]),
            equality_constraints=[LinearConstraint(
                functional=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=[[1.0]])]), rhs=-1.0
            )]
        )
        solution = solve_sdp(problem)

        assert solution.status == SdpStatus.INFEASIBLE
        assert solution.blocks == []

    def test_unbounded(self):
        """Test maximizing an unconstrained free variable is unbounded."""
        problem = SdpProblem(
            blocks=[VariableBlock(dim=1, psd=False)],
            objective=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=[[1.0]])])
        )
        assert solve_sdp(problem).status == SdpStatus.UNBOUNDED

    def test_large_residuals_downgrade_status(self, box_problem):
        """Test an optimal solver status with poor residuals is reported inaccurate."""
        poor = KktResiduals(primal=1e-2, dual=0.0, gap=0.0)
        with patch('backend.services.sdp_solver._residuals', return_value=poor):
            solution = solve_sdp(box_problem)

        assert solution.status == SdpStatus.INACCURATE
        assert solution.status.usable


class TestSolverSelection:
    """Test the primary and fallback solver choice."""

    def test_fallback_when_primary_missing(self):
        """Test the fallback solver is used when the primary is not installed."""
        solver = SdpSolver()
        solver.installed = {'SCS'}
        assert solver._candidates() == ['SCS']

    def test_cvxpy_default_when_none_installed(self):
        """Test cvxpy picks a solver when neither configured one is installed."""
        solver = SdpSolver()
        solver.installed = set()
        assert solver._candidates() == [None]

    def test_panic_falls_back(self, box_problem):
        """Test a panic inside the primary solver moves on to the fallback."""
        solver = SdpSolver()
        if not {'CLARABEL', 'SCS'} <= solver.installed:
            pytest.skip("needs both CLARABEL and SCS")
        original = cp.Problem.solve
        calls = []

        def flaky(self, *args, **kwargs):
            calls.append(kwargs.get('solver'))
            if len(calls) == 1:
                raise _SolverPanic("Eigval error: Eigen(1)")
            return original(self, *args, **kwargs)

        with patch.object(cp.Problem, 'solve', new=flaky):
            solution = solver.solve(box_problem, tol=1e-4)

        assert calls == ['CLARABEL', 'SCS']
        assert solution.solver == 'SCS'
        assert solution.status.usable
        assert solution.objective_value == pytest.approx(2.0, abs=1e-3)

    def test_every_solver_panics(self, box_problem):
        """Test panics in every candidate give an unusable status instead of escaping."""
        with patch.object(cp.Problem, 'solve', side_effect=_SolverPanic("Eigval error")):
            solution = solve_sdp(box_problem)

        assert not solution.status.usable
        assert solution.blocks == []

    def test_interrupt_propagates(self, box_problem):
        """Test KeyboardInterrupt is not swallowed by the fallback loop."""
        with patch.object(cp.Problem, 'solve', side_effect=KeyboardInterrupt):
            with pytest.raises(KeyboardInterrupt):
                solve_sdp(box_problem)


class TestProblemValidation:
    """Test problem construction checks."""

    def test_asymmetric_coefficient(self):
        """Test asymmetric objective coefficients are rejected."""
        with pytest.raises(ValidationError):
            FunctionalTerm(block=0, coeff=[[0.0, 1.0], [0.0, 0.0]])

    def test_shape_mismatch(self):
        """Test a coefficient of the wrong size is rejected."""
        with pytest.raises(ValidationError):
            SdpProblem(
                blocks=[VariableBlock(dim=2)],
                objective=LinearFunctional(terms=[FunctionalTerm(block=0, coeff=np.eye(3))])
            )

    def test_lmi_left_factor_shape(self):
        """Test an LMI term whose factor does not match the block is rejected."""
        with pytest.raises(ValidationError):
            SdpProblem(
                blocks=[VariableBlock(dim=2)],
                objective=LinearFunctional(),
                lmi_constraints=[LmiConstraint(constant=np.eye(2), terms=[LmiTerm(block=0, left=np.eye(3))])]
            )


class TestDump:
    """Test the plain-text problem dump."""

    def test_format(self, box_problem):
        """Test the dump lists blocks, objective and constraints."""
        text = format_sdp(box_problem)
        lines = text.splitlines()

        assert lines[0] == "sdp box"
        assert lines[1] == "sense maximize"
        assert lines[2] == "block 0 dim=2 psd=true name=Z"
        assert lines[3] == "objective [0][[1.0,0.0],[0.0,1.0]]"
        assert lines[4].startswith("lmi upper constant=[[1.0,0.0],[0.0,1.0]] [0]-1.0*")
        assert text.endswith("\n")

    def test_dump_writes_file(self, box_problem, tmp_path):
        """Test dump_sdp writes the formatted text."""
        path = dump_sdp(box_problem, tmp_path / "out" / "box.sdp")

        assert path.read_text(encoding='utf-8') == format_sdp(box_problem)

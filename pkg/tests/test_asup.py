"""
Tests for the ASUP checkers and constructions.
"""

import itertools

import numpy as np
import pytest

from backend.core.exceptions import (
    ConditionsNotMetError,
    InvalidInputError,
    LambdaCapExceededError,
    ThresholdAboveMaximumError,
    UnsupportedCaseError,
    WrongCaseError,
)
from backend.models import PrivacyRequest, Sanitization, SystemModel
from backend.services.asup_engine import (
    check_asup,
    check_asup_no_prior,
    check_asup_with_prior,
    construct_no_prior,
    construct_with_prior,
    get_asup_engine,
    xi_matrix,
)
from backend.services.crlb import privacy, tradeoff_report, utility
from backend.utils.linalg import null_basis
from conftest import random_model, random_spd


def _hidden_state_model(rng: np.random.Generator) -> SystemModel:
    """Three agents; only agent 1 sees state 3, which U ignores and G_j touches."""
    agent_dims = [2, 3, 3]
    H = rng.uniform(-1.0, 1.0, size=(8, 3))
    H[2:, 2] = 0.0
    U = np.hstack([rng.uniform(-1.0, 1.0, size=(1, 2)), np.zeros((1, 1))])
    G = [rng.uniform(-1.0, 1.0, size=(1, 3)) + np.array([[0.0, 0.0, 1.5]]) for _ in agent_dims]
    return SystemModel(agent_dims=agent_dims, H=H, R=random_spd(rng, 8), U=U, G=G)


class TestNoPriorChecker:
    """Test witness detection without prior."""

    def test_xi_matrix_fixture(self, no_prior_model):
        """Test Xi of the 3-measurement fixture."""
        expected = np.array([[1, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 1]], dtype=float)
        np.testing.assert_allclose(xi_matrix(no_prior_model, 1), expected, atol=1e-14)

    def test_fixture_is_achievable(self, no_prior_model):
        """Test the single agent witnesses its private map."""
        verdict = check_asup_no_prior(no_prior_model)

        assert verdict.achievable
        assert verdict.per_private[0].witnesses == [1]
        assert verdict.agents[0].xi_rank == 2
        assert verdict.agents[0].null_dim == 1

    def test_public_equals_private(self, g_equals_u_model):
        """Test G = U rules out perfect-utility privacy."""
        verdict = check_asup(g_equals_u_model)

        assert not verdict.achievable
        assert verdict.per_private[0].witnesses == []

    def test_hidden_state_witness(self):
        """Test only the agent observing the hidden state witnesses."""
        rng = np.random.default_rng(41)
        model = _hidden_state_model(rng)
        verdict = check_asup_no_prior(model)

        assert verdict.achievable
        for entry in verdict.per_private:
            assert entry.witnesses == [1]

    def test_wrong_case(self, with_prior_model):
        """Test the no-prior checker refuses a prior model."""
        with pytest.raises(WrongCaseError):
            check_asup_no_prior(with_prior_model)


class TestNoPriorConstruction:
    """Test rank-one witness noise."""

    @pytest.mark.parametrize("eps", [5.0, 1e6])
    def test_fixture_construction(self, no_prior_model, eps):
        """Test the noise sits on measurement 2 and privacy equals its scale."""
        result = construct_no_prior(no_prior_model, PrivacyRequest(eps=[eps]))
        Theta = result.sanitization.Theta
        lam = Theta[1, 1]

        assert lam >= eps
        assert lam <= eps * 1.02
        np.testing.assert_allclose(Theta, np.diag([0.0, lam, 0.0]), atol=1e-9 * lam)
        assert privacy(no_prior_model, result.sanitization, 1) == pytest.approx(lam, rel=1e-9)
        assert abs(utility(no_prior_model, result.sanitization)) <= 1e-9
        assert result.agents[0].agent_index == 1
        assert result.agents[0].private_index == 1

    def test_zero_threshold_adds_no_noise(self, no_prior_model):
        """Test eps = 0 returns the identity sanitization."""
        result = construct_no_prior(no_prior_model, PrivacyRequest(eps=[0.0]))

        np.testing.assert_array_equal(result.sanitization.Theta, np.zeros((3, 3)))
        assert result.agents == []

    def test_not_achievable(self, g_equals_u_model):
        """Test construction fails when no witness exists."""
        with pytest.raises(ConditionsNotMetError):
            construct_no_prior(g_equals_u_model, PrivacyRequest(eps=[1.0]))

    def test_lambda_cap(self, no_prior_model):
        """Test a cap below the needed scale raises."""
        with pytest.raises(LambdaCapExceededError):
            construct_no_prior(no_prior_model, PrivacyRequest(eps=[100.0]), lambda_cap=10.0)

    def test_cap_below_one(self, no_prior_model):
        """Test a cap under the starting scale bounds the search instead of being skipped."""
        with pytest.raises(LambdaCapExceededError):
            construct_no_prior(no_prior_model, PrivacyRequest(eps=[0.75]), lambda_cap=0.5)

        result = construct_no_prior(no_prior_model, PrivacyRequest(eps=[0.25]), lambda_cap=0.5)
        lam = result.sanitization.Theta[1, 1]
        assert 0.25 * (1 - 1e-9) <= lam <= 0.5
        assert result.agents[0].noise_scale <= 0.5

    def test_unknown_strategy(self, no_prior_model):
        """Test an unknown strategy name is rejected."""
        with pytest.raises(InvalidInputError):
            construct_no_prior(no_prior_model, PrivacyRequest(eps=[1.0]), strategy='nearest')

    def test_random_hidden_state_models(self):
        """Test constructions keep perfect utility and reach every threshold."""
        rng = np.random.default_rng(42)
        for _ in range(10):
            model = _hidden_state_model(rng)
            eps = list(rng.uniform(0.5, 20.0, size=3))
            result = construct_no_prior(model, PrivacyRequest(eps=eps))
            report = tradeoff_report(model, result.sanitization)

            assert abs(report.utility) <= 1e-9
            for p, e in zip(report.privacy, eps):
                assert p >= e * (1 - 1e-9)
            W = null_basis(xi_matrix(model, 1))
            for agent in result.agents:
                v = np.asarray(agent.chosen_vector)
                assert agent.agent_index == 1
                np.testing.assert_allclose(W.vectors @ (W.vectors.T @ v), v, atol=1e-9)

    def test_own_agent_strategy(self):
        """Test own-agent refuses maps whose agent is no witness."""
        rng = np.random.default_rng(43)
        model = _hidden_state_model(rng)

        result = construct_no_prior(model, PrivacyRequest(eps=[2.0, 0.0, 0.0]), strategy='own-agent')
        assert privacy(model, result.sanitization, 1) >= 2.0 * (1 - 1e-9)

        with pytest.raises(ConditionsNotMetError):
            construct_no_prior(model, PrivacyRequest(eps=[0.0, 2.0, 0.0]), strategy='own-agent')


class TestWithPrior:
    """Test the residual checker and the common-scale construction."""

    def test_fixture_residual_vanishes(self, with_prior_model):
        """Test U Psi H P0 G^T = 0 on the with-prior fixture."""
        verdict = check_asup_with_prior(with_prior_model)

        assert verdict.achievable
        assert verdict.residuals[0] == pytest.approx(0.0, abs=1e-15)

    def test_violating_fixture(self, violating_prior_model):
        """Test G = U gives residual 1/2 and no tradeoff."""
        verdict = check_asup(violating_prior_model)

        assert not verdict.achievable
        assert verdict.residuals[0] == pytest.approx(0.5, abs=1e-14)
        with pytest.raises(ConditionsNotMetError):
            construct_with_prior(violating_prior_model, PrivacyRequest(eps=[0.1]))

    def test_fixture_construction(self, with_prior_model):
        """Test eps = 1/2 needs noise scale 2 on measurement 2."""
        result = construct_with_prior(with_prior_model, PrivacyRequest(eps=[0.5]))
        Theta = result.sanitization.Theta

        assert Theta[1, 1] == pytest.approx(2.0, rel=0.02)
        assert Theta[0, 0] == pytest.approx(0.0, abs=1e-12)
        lam = Theta[1, 1]
        assert privacy(with_prior_model, result.sanitization, 1) == pytest.approx(lam / (2 + lam), rel=1e-9)
        assert abs(utility(with_prior_model, result.sanitization)) <= 1e-9

    @pytest.mark.parametrize("eps", [1.0, 1.5])
    def test_threshold_at_or_above_maximum(self, with_prior_model, eps):
        """Test thresholds at or above eps_max = 1 are refused."""
        with pytest.raises(ThresholdAboveMaximumError) as exc:
            construct_with_prior(with_prior_model, PrivacyRequest(eps=[eps]))
        assert exc.value.reason == 'threshold-at-or-above-eps-max'

    def test_wrong_case(self, no_prior_model):
        """Test the with-prior construction refuses a no-prior model."""
        with pytest.raises(WrongCaseError):
            construct_with_prior(no_prior_model, PrivacyRequest(eps=[0.5]))

    def test_dispatch(self, with_prior_model, no_prior_model):
        """Test construct picks the prior case's construction."""
        engine = get_asup_engine()

        assert engine.construct(with_prior_model, PrivacyRequest(eps=[0.5])).sanitization.Theta[1, 1] > 0
        assert engine.construct(no_prior_model, PrivacyRequest(eps=[1.0])).sanitization.Theta[1, 1] >= 1.0


def _one_silent_agent_model() -> SystemModel:
    """Agent 1 sees the public state (residual 1/2); agent 2 does not (residual 0)."""
    return SystemModel(agent_dims=[1, 1], H=np.eye(2), R=np.eye(2), J0=np.eye(2), U=np.array([[1.0, 0.0]]),
                       G=[np.array([[1.0, 1.0]]), np.array([[0.0, 1.0]])])


class TestPartialWithPrior:
    """Test the with-prior construction when only some agents meet the residual condition."""

    def test_strict_mode_refuses(self):
        """Test the default construction still needs every residual to vanish."""
        with pytest.raises(ConditionsNotMetError):
            construct_with_prior(_one_silent_agent_model(), PrivacyRequest(eps=[0.2, 0.2]))

    def test_failing_agent_stays_silent(self):
        """Test only the qualifying agent adds noise and both thresholds are met."""
        model = _one_silent_agent_model()
        result = construct_with_prior(model, PrivacyRequest(eps=[0.2, 0.2]), partial=True)
        Theta = result.sanitization.Theta
        lam = Theta[1, 1]

        assert Theta[0, 0] == 0.0
        assert 4.0 / 3.0 * (1 - 1e-9) <= lam <= 4.0 / 3.0 * 1.02
        report = tradeoff_report(model, result.sanitization)
        assert abs(report.utility) <= 1e-9
        assert report.privacy[0] == pytest.approx((1 + lam) / (2 + lam) - 0.5, rel=1e-9)
        assert report.privacy[1] == pytest.approx(lam / (2 + lam), rel=1e-9)

        silent, noisy = result.agents
        assert silent.noise_scale == 0.0
        assert silent.residual == pytest.approx(0.5, abs=1e-14)
        assert noisy.noise_scale == pytest.approx(lam)

    def test_threshold_beyond_silent_reach(self):
        """Test a threshold the qualifying agents cannot buy hits the scale cap."""
        with pytest.raises(LambdaCapExceededError):
            construct_with_prior(_one_silent_agent_model(), PrivacyRequest(eps=[0.6, 0.1]), partial=True)

    def test_no_qualifying_agent(self, violating_prior_model):
        """Test zero thresholds pass with no noise while positive ones still fail."""
        result = construct_with_prior(violating_prior_model, PrivacyRequest(eps=[0.0]), partial=True)
        np.testing.assert_array_equal(result.sanitization.Theta, np.zeros((2, 2)))

        with pytest.raises(ConditionsNotMetError):
            construct_with_prior(violating_prior_model, PrivacyRequest(eps=[0.1]), partial=True)

    def test_no_prior_model_rejected(self, no_prior_model):
        """Test dispatch refuses partial construction without prior."""
        with pytest.raises(UnsupportedCaseError):
            get_asup_engine().construct(no_prior_model, PrivacyRequest(eps=[1.0]), partial=True)


def _axis_witness_model(rng: np.random.Generator) -> SystemModel:
    """Two agents, diagonal R; one measurement alone sees the last state, which U ignores and every G_j uses."""
    n_public = int(rng.integers(1, 4))
    agent_dims = [int(rng.integers(2, 5)), int(rng.integers(2, 5))]
    N, L = sum(agent_dims), n_public + 1
    H = np.hstack([rng.uniform(-1.0, 1.0, size=(N, n_public)), np.zeros((N, 1))])
    hidden_row = int(rng.integers(0, N))
    H[hidden_row] = 0.0
    H[hidden_row, -1] = rng.uniform(0.5, 1.5)
    U = np.hstack([rng.uniform(-1.0, 1.0, size=(1, n_public)), np.zeros((1, 1))])
    G = [np.hstack([rng.uniform(-1.0, 1.0, size=(1, n_public)), [[rng.uniform(0.5, 1.5)]]]) for _ in agent_dims]
    return SystemModel(agent_dims=agent_dims, H=H, R=np.diag(rng.uniform(0.5, 2.0, size=N)), U=U, G=G)


def _sphere_grid(n: int) -> np.ndarray:
    """Unit vectors of the nonzero points of {-1, -1/2, 0, 1/2, 1}^n."""
    points = np.array(list(itertools.product([-1.0, -0.5, 0.0, 0.5, 1.0], repeat=n)))
    points = points[np.any(points != 0, axis=1)]
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def _grid_search_verdict(model: SystemModel, lam: float = 1e6) -> bool:
    """True when every nonzero G_j is hidden by some single-agent rank-one noise lam v v^T from the grid."""
    targets = [j for j, G in enumerate(model.G) if np.any(G)]
    hidden = set()
    for agent in model.slices():
        for v in _sphere_grid(agent.size):
            Theta = np.zeros((model.N, model.N))
            Theta[agent.slice, agent.slice] = lam * np.outer(v, v)
            report = tradeoff_report(model, Sanitization.noise_only(Theta, model.agent_dims))
            if report.utility >= -1e-6:
                hidden.update(j for j in targets if report.privacy[j] >= 1e3)
    return hidden == set(targets)


class TestGridOracle:
    """Test the no-prior checker against brute-force rank-one noise search."""

    @pytest.mark.parametrize("seed", range(8))
    def test_axis_witness_models(self, seed):
        """Test models with a single-measurement hidden state are achievable for checker and search alike."""
        model = _axis_witness_model(np.random.default_rng(500 + seed))

        assert check_asup_no_prior(model).achievable
        assert _grid_search_verdict(model)

    @pytest.mark.parametrize("seed", range(8))
    def test_dense_models(self, seed):
        """Test dense models whose agents hold at most N - L rows are refused by checker and search alike."""
        rng = np.random.default_rng(600 + seed)
        L = int(rng.integers(2, 5))
        agent_dims = [int(rng.integers(2, 5)), int(rng.integers(2, 5))]
        while sum(agent_dims) - L < max(agent_dims):
            L -= 1
        model = random_model(rng, N=sum(agent_dims), L=L, S=2, prior=False, agent_dims=agent_dims)

        assert not check_asup_no_prior(model).achievable
        assert not _grid_search_verdict(model)

    def test_fixtures(self, no_prior_model, g_equals_u_model):
        """Test the grid search agrees with the checker on both 3-measurement fixtures."""
        assert _grid_search_verdict(no_prior_model)
        assert not _grid_search_verdict(g_equals_u_model)


class TestScaleInvariance:
    """Test verdicts do not depend on the overall noise level."""

    @pytest.mark.parametrize("factor", [1e-2, 0.5, 7.0, 1e2])
    def test_no_prior_verdicts(self, factor, no_prior_model, g_equals_u_model):
        """Test scaling R keeps both no-prior verdicts and their witnesses."""
        rng = np.random.default_rng(44)
        models = [no_prior_model, g_equals_u_model, _hidden_state_model(rng), _axis_witness_model(rng),
                  random_model(rng, N=6, L=2, S=2, prior=False)]
        for model in models:
            before = check_asup_no_prior(model)
            after = check_asup_no_prior(model.with_noise_scaled(factor))

            assert after.achievable == before.achievable
            assert [p.witnesses for p in after.per_private] == [p.witnesses for p in before.per_private]

    @pytest.mark.parametrize("factor", [1e-2, 0.5, 7.0, 1e2])
    def test_with_prior_verdicts(self, factor, with_prior_model, violating_prior_model):
        """Test scaling R keeps the with-prior verdicts."""
        rng = np.random.default_rng(45)
        models = [with_prior_model, violating_prior_model, _one_silent_agent_model(),
                  random_model(rng, N=6, L=2, S=2, prior=True)]
        for model in models:
            assert (check_asup_with_prior(model.with_noise_scaled(factor)).achievable
                    == check_asup_with_prior(model).achievable)

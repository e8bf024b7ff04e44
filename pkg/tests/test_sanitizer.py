"""
Tests for sanitization mechanisms: normalization, sampling, boundary
approximation and padding.
"""

import numpy as np
import pytest

from backend.core.exceptions import InvalidInputError
from backend.models import Sanitization, SystemModel
from backend.services.crlb import perturbed_crlb, privacy, utility
from backend.services.sanitizer import apply, boundary_approximation, normalize, pad_blocks
from backend.utils.linalg import block_diag_from
from conftest import random_model, random_sanitization


@pytest.fixture
def scalar_model():
    return SystemModel(agent_dims=[1], H=[[1.0]], R=[[1.0]], U=[[1.0]], G=[[[1.0]]])


@pytest.fixture
def suppression_model():
    return SystemModel(agent_dims=[2], H=np.eye(2), R=np.eye(2), U=[[1.0, 0.0]], G=[[[0.0, 1.0]]])


class TestNormalize:
    """Test rewriting (C, Theta) with 0/1 diagonal noise."""

    def test_scalar_example(self, scalar_model):
        """Test C=1, Theta=4 becomes C'=1/2, Lambda_b=1 with the same bound 5."""
        s = Sanitization(C=[[1.0]], Theta=[[4.0]], agent_dims=[1])
        normalized = normalize(s)

        assert normalized.C[0, 0] == pytest.approx(0.5)
        assert normalized.Theta[0, 0] == 1.0
        assert perturbed_crlb(scalar_model, normalized).matrix[0, 0] == pytest.approx(5.0)
        assert perturbed_crlb(scalar_model, s).matrix[0, 0] == pytest.approx(5.0)

    def test_diagonal_example(self):
        """Test C=I2, Theta=diag(0, 9) becomes C'=diag(1, 1/3), Lambda_b=diag(0, 1)."""
        s = Sanitization(C=np.eye(2), Theta=np.diag([0.0, 9.0]), agent_dims=[2])
        normalized = normalize(s)

        np.testing.assert_allclose(normalized.C, np.diag([1.0, 1.0 / 3.0]), atol=1e-15)
        np.testing.assert_array_equal(normalized.Theta, np.diag([0.0, 1.0]))

    def test_noise_free_keeps_bound(self, no_prior_model):
        """Test Theta = 0 leaves the mechanism's bound unchanged."""
        s = Sanitization(C=np.diag([2.0, 1.0, 3.0]), Theta=np.zeros((3, 3)), agent_dims=[3])
        normalized = normalize(s)

        np.testing.assert_array_equal(normalized.Theta, np.zeros((3, 3)))
        np.testing.assert_allclose(perturbed_crlb(no_prior_model, normalized).matrix,
                                   perturbed_crlb(no_prior_model, s).matrix, rtol=1e-12)

    def test_random_sanitizations(self):
        """Test normalization preserves the perturbed bound and yields 0/1 noise."""
        rng = np.random.default_rng(31)
        for _ in range(100):
            model = random_model(rng, N=5, L=2, S=2, prior=bool(rng.integers(0, 2)))
            s = random_sanitization(rng, model.agent_dims)
            if rng.uniform() < 0.3:
                s = Sanitization(C=s.C, Theta=np.zeros_like(s.Theta), agent_dims=s.agent_dims)
            normalized = normalize(s)

            before = perturbed_crlb(model, s).matrix
            after = perturbed_crlb(model, normalized).matrix
            assert np.linalg.norm(after - before) <= 1e-8 * np.linalg.norm(before)
            assert set(np.unique(np.diag(normalized.Theta))) <= {0.0, 1.0}
            np.testing.assert_array_equal(normalized.Theta, np.diag(np.diag(normalized.Theta)))


class TestApply:
    """Test sampling sanitized measurements."""

    def test_noise_free_identity(self):
        """Test (I, 0) returns the measurement exactly."""
        y = np.array([1.5, -2.0, 3.25])
        out = apply(Sanitization.identity([1, 2]), y, np.random.default_rng(0))

        np.testing.assert_array_equal(out, y)

    def test_scalar_noise_draw(self):
        """Test scalar unit noise adds the generator's first standard normal."""
        expected = np.random.default_rng(42).standard_normal()
        out = apply(Sanitization(C=[[1.0]], Theta=[[1.0]], agent_dims=[1]), [2.0], np.random.default_rng(42))

        assert out[0] == pytest.approx(2.0 + expected, abs=1e-15)

    def test_seeded_determinism(self):
        """Test equal seeds give equal samples."""
        rng = np.random.default_rng(1)
        s = random_sanitization(rng, [2, 2])
        y = rng.normal(size=4)

        a = apply(s, y, np.random.default_rng(9))
        b = apply(s, y, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("singular", [False, True])
    def test_empirical_noise_covariance(self, singular):
        """Test 10^5 sanitized zero measurements have covariance Theta within 5% Frobenius."""
        rng = np.random.default_rng(33)
        s = random_sanitization(rng, [2, 2])
        Theta = s.Theta
        if singular:
            v = rng.normal(size=(2, 1))
            Theta = block_diag_from([v @ v.T, Theta[2:, 2:]])
        s = Sanitization(C=s.C, Theta=Theta, agent_dims=[2, 2])

        draws = np.random.default_rng(34)
        samples = np.array([apply(s, np.zeros(4), draws) for _ in range(100_000)])

        assert np.abs(samples.mean(axis=0)).max() <= 0.05 * np.sqrt(np.diag(Theta).max())
        empirical = np.cov(samples, rowvar=False)
        assert np.linalg.norm(empirical - Theta) <= 0.05 * np.linalg.norm(Theta)

    def test_wrong_length(self):
        """Test a measurement of the wrong length raises."""
        with pytest.raises(InvalidInputError):
            apply(Sanitization.identity([2]), [1.0], np.random.default_rng(0))


class TestBoundaryApproximation:
    """Test pure-noise approximation of compressions."""

    def test_invertible_compression_exact(self):
        """Test an invertible C is matched exactly at every lam."""
        rng = np.random.default_rng(32)
        model = random_model(rng, N=4, L=2, S=2, prior=False)
        s = random_sanitization(rng, model.agent_dims)
        target = perturbed_crlb(model, s).matrix

        for lam in (1.0, 0.1, 0.01):
            approx = perturbed_crlb(model, boundary_approximation(s, lam)).matrix
            np.testing.assert_allclose(approx, target, rtol=1e-8)

    def test_suppression_limit(self, suppression_model):
        """Test C = diag(1, 0) is approached monotonically with P~_22 = 1 + 1/lam."""
        s = Sanitization(C=np.diag([1.0, 0.0]), Theta=np.zeros((2, 2)), agent_dims=[2])
        previous = 0.0
        for lam in (1.0, 0.1, 0.01):
            approx = boundary_approximation(s, lam)
            P = perturbed_crlb(suppression_model, approx).matrix

            assert P[0, 0] == pytest.approx(1.0)
            assert P[1, 1] == pytest.approx(1.0 + 1.0 / lam, rel=1e-10)
            assert P[1, 1] > previous
            previous = P[1, 1]
        assert previous > 100
        assert privacy(suppression_model, s, 1) == np.inf

    def test_full_suppression_grows(self, scalar_model):
        """Test C = 0 in a scalar model is approached by growing noise."""
        s = Sanitization(C=[[0.0]], Theta=[[0.0]], agent_dims=[1])
        values = [perturbed_crlb(scalar_model, boundary_approximation(s, lam)).matrix[0, 0]
                  for lam in (1.0, 0.1, 0.01)]

        assert values[0] < values[1] < values[2]

    def test_non_positive_lam(self):
        """Test lam must be positive."""
        with pytest.raises(InvalidInputError):
            boundary_approximation(Sanitization.identity([1]), 0.0)


class TestPadBlocks:
    """Test zero-row padding of non-square compressions."""

    def test_padding_keeps_bound(self, no_prior_model):
        """Test a 2x3 compression padded to 3x3 has the bound of its rows."""
        C_i = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        padded = pad_blocks([C_i], [np.diag([0.0, 4.0])], [3])

        assert padded.C.shape == (3, 3)
        np.testing.assert_allclose(perturbed_crlb(no_prior_model, padded).matrix, np.diag([1.0, 5.0]), rtol=1e-12)
        assert utility(no_prior_model, padded) == pytest.approx(0.0, abs=1e-12)

    def test_padding_shapes_checked(self):
        """Test blocks with more rows than measurements are rejected."""
        with pytest.raises(InvalidInputError):
            pad_blocks([np.ones((3, 2))], [np.eye(3)], [2])

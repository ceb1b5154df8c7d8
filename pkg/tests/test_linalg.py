import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixcraft import linalg
from mixcraft.errors import DimensionMismatch, NotPositiveDefinite, ZeroVariance


def random_spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return a @ a.T + scale * np.eye(d)


class TestCholesky:
    def test_identity_factors_to_itself(self):
        L = linalg.cholesky(np.eye(2))
        assert np.allclose(L, np.eye(2))

    def test_diagonal_square_roots(self):
        L = linalg.cholesky([[4.0, 0.0], [0.0, 9.0]])
        assert np.allclose(L, [[2.0, 0.0], [0.0, 3.0]])

    def test_reconstruction(self):
        # oracle: multiply the factor back together
        m = np.array([[4.0, 2.0], [2.0, 5.0]])
        L = linalg.cholesky(m)
        assert np.allclose(L, [[2.0, 0.0], [1.0, 2.0]])
        assert np.allclose(L @ L.T, m, rtol=1e-12)

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            linalg.cholesky([[1.0, 2.0], [2.0, 1.0]])

    def test_rejects_singular(self):
        with pytest.raises(NotPositiveDefinite):
            linalg.cholesky([[1.0, 1.0], [1.0, 1.0]])

    @given(st.integers(1, 6), st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_reconstructs_random_spd(self, d, seed):
        m = random_spd(np.random.default_rng(seed), d)
        L = linalg.cholesky(m)
        assert np.allclose(L @ L.T, m, rtol=1e-12, atol=1e-12 * np.abs(m).max())


class TestDeterminant:
    def test_identity(self):
        assert linalg.determinant(np.eye(3)) == pytest.approx(1.0)

    def test_diagonal(self):
        assert linalg.determinant([[4.0, 0.0], [0.0, 9.0]]) == pytest.approx(36.0)

    def test_cofactor_oracle(self):
        # 4*5 - 2*2 by direct cofactor expansion
        assert linalg.determinant([[4.0, 2.0], [2.0, 5.0]]) == pytest.approx(16.0)

    @given(st.integers(1, 5), st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_positive_and_matches_log_form(self, d, seed):
        m = random_spd(np.random.default_rng(seed), d)
        det = linalg.determinant(m)
        assert det > 0
        assert np.log(det) == pytest.approx(linalg.log_determinant(m), rel=1e-10)


class TestInverse:
    def test_identity(self):
        assert np.allclose(linalg.inverse(np.eye(2)), np.eye(2))

    def test_diagonal_reciprocals(self):
        inv = linalg.inverse([[4.0, 0.0], [0.0, 9.0]])
        assert np.allclose(inv, [[0.25, 0.0], [0.0, 1.0 / 9.0]])

    def test_adjugate_oracle(self):
        # adjugate over determinant 16
        inv = linalg.inverse([[4.0, 2.0], [2.0, 5.0]])
        assert np.allclose(inv, [[5.0 / 16, -2.0 / 16], [-2.0 / 16, 4.0 / 16]])

    @given(st.integers(1, 6), st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_produces_identity(self, d, seed):
        m = random_spd(np.random.default_rng(seed), d)
        assert np.allclose(m @ linalg.inverse(m), np.eye(d), atol=1e-10)


class TestCorrelationTransforms:
    def test_uncorrelated_is_identity(self):
        assert np.allclose(
            linalg.correlation_from_covariance([[4.0, 0.0], [0.0, 9.0]]), np.eye(2)
        )

    def test_positive_correlation(self):
        r = linalg.correlation_from_covariance([[4.0, 2.0], [2.0, 4.0]])
        assert np.allclose(r, [[1.0, 0.5], [0.5, 1.0]])

    def test_negative_correlation(self):
        r = linalg.correlation_from_covariance([[9.0, -3.0], [-3.0, 4.0]])
        assert np.allclose(r, [[1.0, -0.5], [-0.5, 1.0]])

    def test_zero_variance_rejected(self):
        with pytest.raises(ZeroVariance):
            linalg.correlation_from_covariance([[0.0, 0.0], [0.0, 1.0]])

    def test_assembly_identity(self):
        assert np.allclose(
            linalg.covariance_from_correlation(np.eye(2), [4.0, 9.0]),
            [[4.0, 0.0], [0.0, 9.0]],
        )

    def test_assembly_inverts_extraction(self):
        cov = linalg.covariance_from_correlation([[1.0, 0.5], [0.5, 1.0]], [4.0, 4.0])
        assert np.allclose(cov, [[4.0, 2.0], [2.0, 4.0]])
        cov = linalg.covariance_from_correlation([[1.0, -0.5], [-0.5, 1.0]], [9.0, 4.0])
        assert np.allclose(cov, [[9.0, -3.0], [-3.0, 4.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            linalg.covariance_from_correlation(np.eye(2), [1.0, 2.0, 3.0])

    @given(st.integers(2, 5), st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, d, seed):
        rng = np.random.default_rng(seed)
        cov = random_spd(rng, d)
        r = linalg.correlation_from_covariance(cov)
        var = np.diagonal(cov)
        back = linalg.covariance_from_correlation(r, var)
        assert np.allclose(back, cov, rtol=1e-12, atol=1e-12 * np.abs(cov).max())
        # diagonal rescale keeps whatever variances are requested
        g = np.diagonal(linalg.inverse(r))
        scaled = linalg.covariance_from_correlation(r, g * var)
        assert np.allclose(np.diagonal(scaled), g * var, rtol=1e-12)


class TestRandomOrthonormal:
    def test_one_dimensional_frames(self):
        p = linalg.random_orthonormal(1, np.random.default_rng(0))
        assert p.shape == (1, 1)
        assert abs(abs(p[0, 0]) - 1.0) < 1e-12

    def test_columns_orthonormal(self):
        p = linalg.random_orthonormal(2, np.random.default_rng(5))
        assert np.allclose(p.T @ p, np.eye(2), atol=1e-10)

    def test_deterministic_given_seed(self):
        a = linalg.random_orthonormal(3, np.random.default_rng(11))
        b = linalg.random_orthonormal(3, np.random.default_rng(11))
        assert np.array_equal(a, b)

    @given(st.integers(1, 6), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_orthonormal_for_any_seed(self, d, seed):
        p = linalg.random_orthonormal(d, np.random.default_rng(seed))
        assert np.allclose(p.T @ p, np.eye(d), atol=1e-10)

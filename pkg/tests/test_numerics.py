import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from laebound import numerics
from laebound.errors import DimensionError, NotPSDError, SingularMatrixError

from conftest import random_spd


def _orthogonal(rng, n):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q


class TestSymEig:
    def test_identity(self):
        dec = numerics.sym_eig(np.eye(2))
        np.testing.assert_allclose(dec.eigenvalues, [1.0, 1.0])
        np.testing.assert_allclose(dec.eigenvectors @ dec.eigenvectors.T, np.eye(2), atol=1e-12)

    def test_diagonal_sorted_descending(self):
        np.testing.assert_allclose(numerics.sym_eig(np.diag([2.0, 3.0])).eigenvalues, [3.0, 2.0])

    def test_two_by_two_spectrum_and_signs(self):
        dec = numerics.sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
        np.testing.assert_allclose(dec.eigenvalues, [3.0, 1.0])
        r = 1 / np.sqrt(2)
        # first nonzero component positive
        np.testing.assert_allclose(dec.eigenvectors, [[r, r], [r, -r]], atol=1e-12)

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            numerics.sym_eig(np.ones((2, 3)))

    def test_asymmetric_rejected(self):
        with pytest.raises(DimensionError):
            numerics.sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_deterministic(self, rng):
        M = random_spd(rng, 6)
        a, b = numerics.sym_eig(M), numerics.sym_eig(M.copy())
        assert np.array_equal(a.eigenvalues, b.eigenvalues)
        assert np.array_equal(a.eigenvectors, b.eigenvectors)

    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_reconstruction_invariants(self, n, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, n))
        M = A + A.T
        dec = numerics.sym_eig(M)
        S = dec.eigenvectors
        np.testing.assert_allclose(S.T @ S, np.eye(n), atol=1e-10)
        err = np.linalg.norm(dec.reconstruct() - M) / max(np.linalg.norm(M), 1e-300)
        assert err < 1e-8
        assert np.all(np.diff(dec.eigenvalues) <= 0)


class TestSquareRoots:
    def test_trivial_cases(self):
        np.testing.assert_allclose(numerics.psd_sqrt(np.eye(3)), np.eye(3))
        np.testing.assert_allclose(numerics.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
        np.testing.assert_allclose(numerics.psd_inv_sqrt(np.diag([4.0, 9.0])),
                                   np.diag([0.5, 1 / 3]))

    def test_wishart_sqrt_squares_back(self, rng):
        A = rng.standard_normal((5, 8))
        M = A @ A.T
        R = numerics.psd_sqrt(M)
        assert np.linalg.norm(R @ R - M) / np.linalg.norm(M) < 1e-8

    def test_inv_sqrt_whitens(self, rng):
        M = random_spd(rng, 5)
        R = numerics.psd_inv_sqrt(M)
        np.testing.assert_allclose(R @ M @ R, np.eye(5), atol=1e-8)
        np.testing.assert_allclose(R @ numerics.psd_sqrt(M), np.eye(5), atol=1e-8)

    def test_tiny_negative_eigenvalue_clamped(self):
        M = np.diag([1.0, -1e-13])
        np.testing.assert_allclose(numerics.psd_sqrt(M), np.diag([1.0, 0.0]))

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(NotPSDError) as info:
            numerics.psd_sqrt(np.diag([1.0, -1e-3]))
        assert info.value.eigenvalue == pytest.approx(-1e-3)

    def test_singular_rejected(self):
        with pytest.raises(SingularMatrixError):
            numerics.psd_inv_sqrt(np.diag([1.0, 0.0]))

    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_orthogonal_equivariance(self, n, seed):
        rng = np.random.default_rng(seed)
        M = random_spd(rng, n)
        Q = _orthogonal(rng, n)
        for f in (numerics.psd_sqrt, numerics.psd_inv_sqrt):
            np.testing.assert_allclose(f(Q.T @ M @ Q), Q.T @ f(M) @ Q, atol=1e-8)

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_psd_eigenvalues_above_clamp(self, n, k, seed):
        A = np.random.default_rng(seed).standard_normal((n, k))
        dec = numerics.sym_eig(A @ A.T)
        assert dec.bottom >= -numerics.clamp_tol(dec.top)


class TestLogMeanExp:
    def test_matches_direct(self, rng):
        x = rng.standard_normal(100)
        np.testing.assert_allclose(numerics.logmeanexp(x), np.log(np.mean(np.exp(x))))

    def test_no_overflow(self):
        np.testing.assert_allclose(numerics.logmeanexp([1e4, 1e4]), 1e4)

    def test_axis(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0]])
        np.testing.assert_allclose(numerics.logmeanexp(x, axis=1), [0.0, 1.0])

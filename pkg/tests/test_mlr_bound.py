import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from laebound import mlr_bound, numerics, oracle
from laebound.data import GaussianDataModel, sample_regression
from laebound.errors import ArgumentError
from laebound.verify import random_gaussian_model


def _samples(model, seed, count=8, spread=0.3):
    rng = np.random.default_rng(seed)
    U0 = model.W_star + 0.2 * rng.standard_normal(model.W_star.shape)
    return mlr_bound.gaussian_prior_samples(U0, spread, count, seed)


models = st.integers(0, 2**32 - 1).map(lambda s: random_gaussian_model(np.random.default_rng(s)))


class TestErrorMoments:
    def test_at_w_star(self, rng):
        model = random_gaussian_model(rng)
        mo = mlr_bound.error_moments(model, model.W_star)
        np.testing.assert_allclose(mo.mu_W, 0.0)
        np.testing.assert_allclose(mo.Sigma_W, model.Sigma_e)

    def test_zero_mean_input(self, rng):
        model = random_gaussian_model(rng)
        model = GaussianDataModel(np.zeros(3), model.Sigma_x, model.W_star, model.Sigma_e)
        np.testing.assert_allclose(mlr_bound.error_moments(model, np.zeros((2, 3))).mu_W, 0.0)

    @given(models, st.integers(0, 2**32 - 1))
    def test_b_norm_is_mahalanobis(self, model, seed):
        W = np.random.default_rng(seed).standard_normal(model.W_star.shape)
        mo = mlr_bound.error_moments(model, W)
        maha = mo.mu_W @ np.linalg.solve(mo.Sigma_W, mo.mu_W)
        np.testing.assert_allclose(mo.b @ mo.b, maha, rtol=1e-8, atol=1e-300)

    def test_risk_matches_monte_carlo(self, rng):
        model = random_gaussian_model(rng)
        W = rng.standard_normal(model.W_star.shape)
        est = oracle.mc_true_risk(model, W, 10**6, seed=1)
        exact = mlr_bound.error_moments(model, W).true_risk
        assert abs(est.mean - exact) <= 5 * est.stderr

    def test_non_pd_noise_rejected(self):
        model = GaussianDataModel(np.zeros(1), np.eye(1), np.ones((1, 1)), np.zeros((1, 1)))
        with pytest.raises(ArgumentError):
            mlr_bound.error_moments(model, np.zeros((1, 1)))


class TestPsi:
    def test_single_sample_at_w_star(self, rng):
        model = random_gaussian_model(rng)
        model = GaussianDataModel(np.zeros(3), model.Sigma_x, model.W_star, model.Sigma_e)
        lam, m = 0.7, 9
        eta = np.linalg.eigvalsh(model.Sigma_e)
        expected = lam * np.trace(model.Sigma_e) - 0.5 * m * np.sum(np.log1p(2 * lam * eta / m))
        np.testing.assert_allclose(mlr_bound.psi_exact(model, model.W_star, lam, m), expected)

    def test_scalar_output_reduces_to_variance_form(self, rng):
        sx2, se2 = 1.7, 0.4
        W_star = rng.standard_normal((1, 3))
        model = GaussianDataModel(np.zeros(3), sx2 * np.eye(3), W_star, np.array([[se2]]))
        W = rng.standard_normal((1, 3))
        lam, m = 0.3, 11
        v = sx2 * np.sum((W_star - W) ** 2) + se2
        expected = lam * v - (m / 2) * math.log1p(lam * v / (m / 2))
        np.testing.assert_allclose(mlr_bound.psi_exact(model, W, lam, m), expected, rtol=1e-12)

    def test_upper_at_w_star(self, rng):
        model = random_gaussian_model(rng)
        lam, m = 0.5, 20
        expected = 2 * lam**2 * np.sum(model.Sigma_e**2) / m
        np.testing.assert_allclose(mlr_bound.psi_upper(model, model.W_star, lam, m), expected)

    @given(models, st.integers(0, 2**32 - 1), st.floats(0.01, 2.0), st.integers(1, 500))
    def test_exact_below_upper_zero_mean_input(self, model, seed, lam, m):
        model = GaussianDataModel(np.zeros(3), model.Sigma_x, model.W_star, model.Sigma_e)
        W = _samples(model, seed)
        assert mlr_bound.psi_exact(model, W, lam, m) <= mlr_bound.psi_upper(model, W, lam, m) + 1e-12

    @given(models, st.integers(0, 2**32 - 1), st.floats(0.01, 2.0), st.integers(1, 500))
    def test_exact_below_mean_aware_bound(self, model, seed, lam, m):
        # per sample: log f_m <= sum_i (lam^2 eta_i^2 / m)(1 + 2 b_i^2)
        W = _samples(model, seed)
        bounds = []
        for w in W:
            mo = mlr_bound.error_moments(model, w)
            bounds.append(np.sum(lam**2 * mo.eigenvalues**2 / m * (1 + 2 * mo.b**2)))
        bound = numerics.logmeanexp(bounds)
        assert mlr_bound.psi_exact(model, W, lam, m) <= bound + 1e-12

    def test_frobenius_bound_fails_with_large_mean_error(self):
        # mean error with b_1^2 > 1/2 pushes the exact value above the Frobenius form
        model = random_gaussian_model(np.random.default_rng(10600))
        W = _samples(model, 281)[:1]
        lam, m = 2.0, 23
        assert mlr_bound.error_moments(model, W[0]).b[0] ** 2 > 0.5
        assert mlr_bound.psi_exact(model, W, lam, m) > mlr_bound.psi_upper(model, W, lam, m) + 0.5

    @given(models, st.integers(0, 2**32 - 1), st.floats(0.01, 2.0))
    def test_monotone_in_m(self, model, seed, lam):
        W = _samples(model, seed)
        values = [mlr_bound.psi_exact(model, W, lam, m) for m in (1, 3, 10, 100, 1000)]
        assert np.all(np.diff(values) <= 1e-12)

    def test_upper_scales_as_inverse_m(self, rng):
        model = random_gaussian_model(rng)
        W = _samples(model, 1)
        a = mlr_bound.psi_upper(model, W, 0.5, 10**6)
        b = mlr_bound.psi_upper(model, W, 0.5, 2 * 10**6)
        np.testing.assert_allclose(a / b, 2.0, rtol=1e-5)

    def test_vanishes_for_large_m(self, rng):
        model = random_gaussian_model(rng)
        U0 = model.W_star + 0.1 * rng.standard_normal(model.W_star.shape)
        assert mlr_bound.convergence_condition_gaussian(model, U0, 0.2, 1.0).holds
        W = mlr_bound.gaussian_prior_samples(U0, 0.2, 50, seed=3)
        assert 0 <= mlr_bound.psi_exact(model, W, 1.0, 10**6) < 1e-3

    def test_matches_nested_monte_carlo(self, rng):
        model = random_gaussian_model(rng)
        W = _samples(model, 2, count=5)
        exact = mlr_bound.psi_exact(model, W, 0.1, 5)
        est = oracle.mc_psi(model, W, 0.1, 5, 50_000, seed=3)
        assert abs(est.mean - exact) <= 5 * est.stderr

    def test_nonpositive_lambda(self, rng):
        model = random_gaussian_model(rng)
        with pytest.raises(ArgumentError):
            mlr_bound.psi_exact(model, model.W_star, 0.0, 5)
        with pytest.raises(ArgumentError):
            mlr_bound.psi_upper(model, model.W_star, -1.0, 5)


class TestConvergenceCondition:
    def _unit_model(self, p=2, n=3):
        return GaussianDataModel(np.zeros(n), np.eye(n), np.ones((p, n)), np.eye(p))

    def test_threshold_arithmetic(self):
        model = self._unit_model()
        held = mlr_bound.convergence_condition_gaussian(model, np.zeros((2, 3)), 1.0, 0.4)
        assert held.holds and held.threshold == pytest.approx(0.5)
        broken = mlr_bound.convergence_condition_gaussian(model, np.zeros((2, 3)), 1.0, 0.6)
        assert not broken.holds and broken.log_value is None

    def test_zero_mean_specialization(self, rng):
        model = random_gaussian_model(rng)
        sigma, lam = 0.3, 0.5
        nu = np.linalg.eigvalsh(model.second_moment)
        check = mlr_bound.convergence_condition_gaussian(model, model.W_star, sigma, lam)
        expected = -0.5 * model.p * np.sum(np.log(1 - 2 * lam * sigma**2 * nu))
        np.testing.assert_allclose(check.log_value, expected)

    def test_matches_monte_carlo(self, rng):
        model = random_gaussian_model(rng)
        U0 = model.W_star + 0.3 * rng.standard_normal(model.W_star.shape)
        sigma = 0.2
        check = mlr_bound.convergence_condition_gaussian(model, U0, sigma, 1.0)
        lam = 0.25 * check.threshold
        check = mlr_bound.convergence_condition_gaussian(model, U0, sigma, lam)
        W = mlr_bound.gaussian_prior_samples(U0, sigma, 10**6, seed=4)
        # ||M^{1/2}(W* - W)^T||^2 = sum_i D_i M D_i^T
        D = model.W_star[None] - W
        vals = lam * np.einsum("sij,jk,sik->s", D, model.second_moment, D)
        shift = vals.max()
        e = np.exp(vals - shift)
        est = shift + np.log(e.mean())
        stderr = e.std(ddof=1) / np.sqrt(e.size) / e.mean()
        assert abs(est - check.log_value) <= 5 * stderr


class TestAlquierRhs:
    def test_unit_case(self):
        assert mlr_bound.alquier_rhs(0.0, 0.0, math.exp(-1), 0.0, 1.0) == pytest.approx(1.0)

    def test_arithmetic(self):
        assert mlr_bound.alquier_rhs(5.0, 0.0, 0.01, 0.0, 100.0) == pytest.approx(5.04605, abs=1e-5)

    def test_decreasing_in_lambda(self):
        values = [mlr_bound.alquier_rhs(1.0, 0.5, 0.05, 0.2, lam) for lam in (1, 2, 5, 10)]
        assert np.all(np.diff(values) < 0)

    @pytest.mark.parametrize("args", [(0, 0, 0.5, 0, 0), (0, 0, 1.0, 0, 1), (0, -1, 0.5, 0, 1)])
    def test_range_violations(self, args):
        with pytest.raises(ArgumentError):
            mlr_bound.alquier_rhs(*args)


class TestBoundValidity:
    def test_violation_rate(self, rng):
        model = random_gaussian_model(rng)
        sigma, tau, lam, delta, m = 0.3, 0.2, 2.0, 0.05, 30
        U0 = model.W_star + 0.2 * rng.standard_normal(model.W_star.shape)
        V = model.W_star + 0.05 * rng.standard_normal(model.W_star.shape)
        kl = 0.5 * np.sum(np.log(sigma**2 / tau**2) + tau**2 / sigma**2 - 1
                          + (V - U0) ** 2 / sigma**2)
        psi = mlr_bound.psi_exact(model, mlr_bound.gaussian_prior_samples(U0, sigma, 2000, 0),
                                  lam, m)
        post = mlr_bound.gaussian_prior_samples(V, tau, 200, seed=1)
        true_exp = np.mean([mlr_bound.error_moments(model, W).true_risk for W in post])
        trials, violations = 200, 0
        for t in range(trials):
            X, Y = sample_regression(model, m, seed=100 + t)
            R = Y[None] - post @ X
            emp_exp = np.mean(np.sum(R * R, axis=(1, 2)) / m)
            violations += true_exp > mlr_bound.alquier_rhs(emp_exp, kl, delta, psi, lam)
        assert violations / trials <= delta + 3 * np.sqrt(delta * (1 - delta) / trials)

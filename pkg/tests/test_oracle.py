import numpy as np
import pytest

from laebound import data, lae_bound, oracle
from laebound.errors import ArgumentError, CapacityError, DomainError
from laebound.verify import random_gaussian_model


def _zero_diag(M):
    M = M.copy()
    np.fill_diagonal(M, 0.0)
    return M


class TestMcTrueRisk:
    def test_point_mass(self):
        source = oracle.MaskedBernoulli(data.BernoulliModel.point_mass([0, 0, 0]), 0.5)
        est = oracle.mc_true_risk(source, np.ones((3, 3)), 1000, seed=0)
        assert est.mean == 0.0 and est.stderr == 0.0

    def test_gaussian_at_w_star(self, rng):
        model = random_gaussian_model(rng)
        model = data.GaussianDataModel(np.zeros(3), model.Sigma_x, model.W_star, model.Sigma_e)
        est = oracle.mc_true_risk(model, model.W_star, 10**5, seed=1)
        assert abs(est.mean - np.trace(model.Sigma_e)) <= 5 * est.stderr

    def test_lae_matches_closed_form(self, rng):
        model = data.BernoulliModel.random(3, rng)
        corr = lae_bound.correlations_from_holdout(data.exact_correlation(model), 0.5)
        W = rng.standard_normal((3, 3))
        est = oracle.mc_true_risk(oracle.MaskedBernoulli(model, 0.5), W, 10**5, seed=2)
        assert abs(est.mean - lae_bound.true_risk_closed(corr, W)) <= 5 * est.stderr

    def test_stderr_scaling(self, rng):
        model = random_gaussian_model(rng)
        W = rng.standard_normal(model.W_star.shape)
        a = oracle.mc_true_risk(model, W, 10_000, seed=3).stderr
        b = oracle.mc_true_risk(model, W, 40_000, seed=4).stderr
        assert 0.4 <= b / a <= 0.6

    def test_seed_determinism(self, rng):
        model = random_gaussian_model(rng)
        assert oracle.mc_true_risk(model, model.W_star, 2000, 7) == \
            oracle.mc_true_risk(model, model.W_star, 2000, 7)


class TestEnumeration:
    def test_point_mass_hand_values(self):
        enum = oracle.enumerate_lae_expectations(data.BernoulliModel.point_mass([1, 0]), 0.5)
        np.testing.assert_allclose(enum.Sigma_xx, np.diag([0.5, 0.0]))
        np.testing.assert_allclose(enum.Sigma_yy, np.diag([0.5, 0.0]))
        np.testing.assert_allclose(enum.Sigma_xy, 0.0)

    def test_factorized_mode(self, rng):
        model = data.BernoulliModel.factorized(rng.uniform(0.1, 0.9, 4))
        enum = oracle.enumerate_lae_expectations(model, 0.3)
        corr = lae_bound.correlations_from_holdout(data.exact_correlation(model), 0.3)
        np.testing.assert_allclose(enum.Sigma_xx, corr.Sigma_xx, atol=1e-12)

    def test_vanishing_holdout(self, rng):
        model = data.BernoulliModel.random(3, rng)
        enum = oracle.enumerate_lae_expectations(model, 0.999)
        assert enum.Sigma_yy.max() <= 2e-3 * data.exact_correlation(model).max()

    def test_capacity(self):
        with pytest.raises(CapacityError):
            oracle.enumerate_lae_expectations(data.BernoulliModel.factorized(np.full(13, 0.5)), 0.5)


class TestMcLogMgf:
    def test_degenerate_prior(self, rng):
        model = data.BernoulliModel.random(3, rng)
        corr = lae_bound.correlations_from_holdout(data.exact_correlation(model), 0.5)
        U0 = rng.standard_normal((3, 3))
        prior = lae_bound.GaussianPrior(U0, 1e-6, zero_diag=False)
        est = oracle.mc_log_mgf(prior, corr, 1.5, 10**4, seed=0)
        np.testing.assert_allclose(est.mean, 1.5 * lae_bound.true_risk_closed(corr, U0), rtol=1e-4)

    def test_zero_diagonal_sampling_below_upper_bound(self, rng):
        model = data.BernoulliModel.random(3, rng)
        corr = lae_bound.correlations_from_holdout(data.exact_correlation(model), 0.5)
        prior = lae_bound.GaussianPrior(_zero_diag(0.3 * rng.standard_normal((3, 3))), 0.5)
        lam = 0.25 * lae_bound.mgf_threshold(prior, corr)
        est = oracle.mc_log_mgf(prior, corr, lam, 10**5, seed=1)
        assert est.mean <= lae_bound.log_mgf_prior(prior, corr, lam).value + 5 * est.stderr
        direct = oracle.direct_eq6_log_mgf(prior, corr, lam)
        assert abs(est.mean - direct) <= 5 * est.stderr

    def test_stderr_halves(self, rng):
        model = data.BernoulliModel.random(3, rng)
        corr = lae_bound.correlations_from_holdout(data.exact_correlation(model), 0.5)
        prior = lae_bound.GaussianPrior(0.3 * rng.standard_normal((3, 3)), 0.3, zero_diag=False)
        lam = 0.1 * lae_bound.mgf_threshold(prior, corr)
        a = oracle.mc_log_mgf(prior, corr, lam, 40_000, seed=2).stderr
        b = oracle.mc_log_mgf(prior, corr, lam, 160_000, seed=3).stderr
        assert 0.4 <= b / a <= 0.6


class TestMcPsi:
    def test_tiny_lambda(self, rng):
        model = random_gaussian_model(rng)
        est = oracle.mc_psi(model, model.W_star, 1e-6, 5, 10_000, seed=0)
        assert abs(est.mean) <= max(5 * est.stderr, 1e-6)

    def test_decreases_with_m(self, rng):
        model = random_gaussian_model(rng)
        W = model.W_star + 0.2 * rng.standard_normal((3, *model.W_star.shape))
        values = [oracle.mc_psi(model, W, 0.2, m, 4000, seed=m).mean for m in (5, 50, 500)]
        assert values[0] > values[1] > values[2]


class TestDirectPerRow:
    def test_degenerate_prior(self, rng):
        model = data.BernoulliModel.random(3, rng)
        corr = lae_bound.correlations_from_holdout(data.exact_correlation(model), 0.5)
        U0 = _zero_diag(rng.standard_normal((3, 3)))
        prior = lae_bound.GaussianPrior(U0, 1e-6)
        np.testing.assert_allclose(oracle.direct_eq6_log_mgf(prior, corr, 2.0),
                                   2.0 * lae_bound.true_risk_closed(corr, U0), rtol=1e-3)

    def test_requires_zero_diagonal(self, rng):
        corr = lae_bound.correlations_from_holdout(np.eye(2), 0.5)
        with pytest.raises(ArgumentError):
            oracle.direct_eq6_log_mgf(lae_bound.GaussianPrior(np.eye(2), 1.0, False), corr, 0.1)

    def test_domain(self):
        corr = lae_bound.correlations_from_holdout(np.eye(3), 0.5)
        with pytest.raises(DomainError):
            oracle.direct_eq6_log_mgf(lae_bound.GaussianPrior(np.zeros((3, 3)), 1.0), corr, 100.0)


class TestEaseKkt:
    def test_diagonal_zero_and_stationary(self, rng):
        H = (rng.random((4, 9)) < 0.5).astype(float)
        W = oracle.ease_kkt_solve(H, 1.0)
        np.testing.assert_allclose(np.diag(W), 0.0, atol=1e-12)
        grad = 2 * (W @ (H @ H.T + np.eye(4)) - H @ H.T)
        np.testing.assert_allclose(_zero_diag(grad), 0.0, atol=1e-9)


class TestPosteriorObjective:
    def test_minimizer_improves_on_start(self, rng):
        X = (rng.random((3, 5)) < 0.5).astype(float)
        Y = (rng.random((3, 5)) < 0.5).astype(float)
        prior = lae_bound.GaussianPrior(np.zeros((3, 3)), 0.5)
        start = oracle.posterior_objective(np.zeros((3, 3)), _zero_diag(np.full((3, 3), 0.25)),
                                           X, Y, prior, 2.0)
        _, S, value = oracle.minimize_posterior_objective(X, Y, prior, 2.0)
        assert value <= start
        assert np.all(np.diag(S) == 0.0)

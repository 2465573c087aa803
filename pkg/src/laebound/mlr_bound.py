"""PAC-Bayes machinery for multivariate linear regression with Gaussian data.

Every exponential-scale quantity is returned as its logarithm. Expectations over
the prior are averages over caller-supplied weight samples, so the integration
error over the prior stays explicit.
"""

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import ArgumentError, DimensionError


@dataclass(frozen=True)
class ErrorMoments:
    """Mean and covariance of the prediction error ``y - W x`` for a fixed W."""

    mu_W: np.ndarray
    Sigma_W: np.ndarray
    decomposition: numerics.SpectralDecomposition
    b: np.ndarray

    @property
    def eigenvalues(self):
        return self.decomposition.eigenvalues

    @property
    def true_risk(self):
        """``tr(Sigma_W) + mu_W^T mu_W``."""
        return float(np.trace(self.Sigma_W) + self.mu_W @ self.mu_W)


def _check_pd_noise(model):
    if not numerics.is_positive_definite(model.Sigma_e):
        raise ArgumentError("Sigma_e must be positive definite")


def error_moments(model, W, _checked=False):
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape != model.W_star.shape:
        raise DimensionError(f"W must have shape {model.W_star.shape}, got {W.shape}")
    if not _checked:
        _check_pd_noise(model)
    D = model.W_star - W
    mu_W = D @ model.mu_x
    Sigma_W = D @ model.Sigma_x @ D.T + model.Sigma_e
    Sigma_W = 0.5 * (Sigma_W + Sigma_W.T)
    dec = numerics.sym_eig(Sigma_W)
    # S Sigma_W^{-1/2} mu_W = diag(eta^{-1/2}) S mu_W
    b = (dec.eigenvectors @ mu_W) / np.sqrt(dec.eigenvalues)
    return ErrorMoments(mu_W=mu_W, Sigma_W=Sigma_W, decomposition=dec, b=b)


def _as_samples(prior_samples, model):
    samples = np.asarray(prior_samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[None]
    if samples.ndim != 3 or samples.shape[1:] != model.W_star.shape or samples.shape[0] == 0:
        raise DimensionError(f"prior samples must be a nonempty stack of {model.W_star.shape} matrices")
    return samples


def _check_lambda_m(lam, m):
    if not lam > 0:
        raise ArgumentError(f"lambda must be positive, got {lam}")
    if m < 1:
        raise ArgumentError(f"m must be at least 1, got {m}")


def log_integrand(moments, lam, m):
    """Log of ``f_m(W) = E_S exp(lam (R_true(W) - R_emp(W)))`` for one W.

    Rewritten with ``mu_W^T mu_W = sum_i b_i^2 eta_i`` into two nonnegative sums, which
    avoids cancelling large terms when m is large.
    """
    eta = moments.eigenvalues
    b2 = moments.b**2
    x = 2.0 * lam * eta / m
    log_det_part = np.sum(lam * eta - 0.5 * m * np.log1p(x))
    mean_part = np.sum(2.0 * lam**2 * b2 * eta**2 / (m + 2.0 * lam * eta))
    return float(log_det_part + mean_part)


def psi_exact(model, prior_samples, lam, m):
    """``ln`` of the prior-sample average of the exact per-W integrand."""
    _check_lambda_m(lam, m)
    _check_pd_noise(model)
    samples = _as_samples(prior_samples, model)
    logs = [log_integrand(error_moments(model, W, _checked=True), lam, m) for W in samples]
    return float(numerics.logmeanexp(logs))


def psi_upper(model, prior_samples, lam, m):
    """``ln E exp(2 lam^2 ||Sigma_W||_F^2 / m)`` over the prior samples.

    Dominates ``psi_exact`` sample by sample when every ``b_i^2 <= 1/2`` (in particular
    when ``mu_x = 0``). A larger mean error can make it smaller than ``psi_exact``; the
    per-sample bound ``sum_i (lam^2 eta_i^2 / m)(1 + 2 b_i^2)`` always holds.
    """
    _check_lambda_m(lam, m)
    _check_pd_noise(model)
    samples = _as_samples(prior_samples, model)
    logs = []
    for W in samples:
        Sigma_W = error_moments(model, W, _checked=True).Sigma_W
        logs.append(2.0 * lam**2 * np.sum(Sigma_W * Sigma_W) / m)
    return float(numerics.logmeanexp(logs))


def gaussian_prior_samples(U0, sigma, count, seed):
    """Entry-wise Gaussian weights ``W_ij ~ N(U0_ij, sigma^2)``."""
    U0 = np.atleast_2d(np.asarray(U0, dtype=float))
    rng = np.random.default_rng(seed)
    return U0[None] + sigma * rng.standard_normal((count,) + U0.shape)


@dataclass(frozen=True)
class ConvergenceCheck:
    holds: bool
    threshold: float
    log_value: float = None


def convergence_condition_gaussian(model, U0, sigma, lam):
    """Check ``E_pi exp(lam * sum_i D_i M D_i^T) < inf`` for ``pi = N(U0, sigma^2)`` entry-wise.

    ``M = Sigma_x + mu_x mu_x^T`` and ``D = W_star - W``. The sum runs over the rows of D,
    which is the quantity bounding the integrand; it equals the squared Frobenius norm
    of ``D M^{1/2}``. The expectation is finite iff ``lam < 1/(2 nu_1 sigma^2)``.
    """
    if not sigma > 0 or not lam > 0:
        raise ArgumentError("sigma and lambda must be positive")
    U0 = np.atleast_2d(np.asarray(U0, dtype=float))
    if U0.shape != model.W_star.shape:
        raise DimensionError(f"U0 must have shape {model.W_star.shape}")
    dec = numerics.sym_eig(model.second_moment)
    nu = np.maximum(dec.eigenvalues, 0.0)
    threshold = np.inf if nu[0] <= 0 else 1.0 / (2.0 * nu[0] * sigma**2)
    if not lam < threshold:
        return ConvergenceCheck(False, float(threshold), None)
    D = model.W_star - U0
    proj = dec.eigenvectors @ D.T  # (Q_j . D_i) at [j, i]
    denom = 1.0 - 2.0 * lam * sigma**2 * nu
    mean_part = np.sum(lam * nu[:, None] * proj**2 / denom[:, None])
    log_part = -0.5 * model.p * np.sum(np.log(denom))
    return ConvergenceCheck(True, float(threshold), float(mean_part + log_part))


def alquier_rhs(emp_risk, kl, delta, psi, lam):
    """``emp + (KL + ln(1/delta) + psi) / lam``."""
    if not lam > 0:
        raise ArgumentError(f"lambda must be positive, got {lam}")
    if not 0 < delta < 1:
        raise ArgumentError(f"delta must lie in (0, 1), got {delta}")
    if kl < 0:
        raise ArgumentError(f"KL divergence must be nonnegative, got {kl}")
    return float(emp_risk + (kl + np.log(1.0 / delta) + psi) / lam)

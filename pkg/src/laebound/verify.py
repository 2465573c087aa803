"""Cross-check registry run by ``laebound verify``.

Each check pairs a closed form with its independent reference and reports the
worst discrepancy against a tolerance. Functions are looked up through their
modules at call time, so patching a module attribute affects the checks.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import data, ease, lae_bound, mlr_bound, oracle

DEFAULT_GRID = tuple(float(2**k) for k in range(10))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    tolerance: str
    seconds: float = 0.0


def _random_lae(rng, n, p, factorized=False):
    if factorized:
        model = data.BernoulliModel.factorized(rng.uniform(0.05, 0.6, n))
    else:
        model = data.BernoulliModel.random(n, rng)
    return model, lae_bound.correlations_from_holdout(data.exact_correlation(model), p)


def random_gaussian_model(rng, p=2, n=3):
    A = rng.standard_normal((n, n))
    Bm = rng.standard_normal((p, p))
    return data.GaussianDataModel(
        mu_x=0.5 * rng.standard_normal(n),
        Sigma_x=A @ A.T / n + 0.1 * np.eye(n),
        W_star=rng.standard_normal((p, n)),
        Sigma_e=Bm @ Bm.T / p + 0.2 * np.eye(p),
    )


def check_published_rh(level):
    rh = lae_bound.rh_value(66.99, 0.28, math.log(10 / 0.01), 31571.14, 512.0)
    return abs(rh - 128.66) <= 0.02, f"RH={rh:.4f}", "|RH - 128.66| <= 0.02"


def check_holdout_correlations(level, instances=20):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(instances):
        model = data.BernoulliModel.random(int(rng.integers(2, 7)), rng)
        for p in (0.3, 0.5, 0.7):
            corr = lae_bound.correlations_from_holdout(data.exact_correlation(model), p)
            enum = oracle.enumerate_lae_expectations(model, p)
            for a, b in ((corr.Sigma_xx, enum.Sigma_xx), (corr.Sigma_xy, enum.Sigma_xy),
                         (corr.Sigma_yy, enum.Sigma_yy)):
                worst = max(worst, float(np.max(np.abs(a - b))))
    return worst <= 1e-12, f"max entry error {worst:.2e}", "1e-12"


def check_true_risk(level, instances=20):
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 7))
        p = float(rng.uniform(0.2, 0.8))
        model, corr = _random_lae(rng, n, p)
        W = rng.standard_normal((n, n))
        exact = oracle.enumerate_lae_expectations(model, p).true_risk(W)
        worst = max(worst, abs(lae_bound.true_risk_closed(corr, W) - exact))
    return worst <= 1e-12, f"max error {worst:.2e}", "1e-12"


def _posterior_instance(rng, zero_diag):
    n = int(rng.integers(2, 6))
    m = int(rng.integers(2, 11))
    X = (rng.random((n, m)) < 0.5).astype(float)
    Y = (rng.random((n, m)) < 0.5).astype(float) * (1 - X)
    U0 = 0.3 * rng.standard_normal((n, n))
    if zero_diag:
        np.fill_diagonal(U0, 0.0)
    prior = lae_bound.GaussianPrior(U0, float(rng.uniform(0.2, 1.0)), zero_diag)
    return X, Y, prior, float(rng.uniform(0.5, 10.0))


def posterior_optimality(instances=20, perturbations=1000, seed=13):
    """Worst relative gap to the numerical minimizer and count of perturbations that beat the closed form."""
    rng = np.random.default_rng(seed)
    worst_rel, beaten = 0.0, 0
    for k in range(instances):
        X, Y, prior, lam = _posterior_instance(rng, zero_diag=bool(k % 2 == 0))
        post = lae_bound.optimal_posterior(X, Y, prior, lam)
        S = post.variance_matrix()
        best = oracle.posterior_objective(post.U, S, X, Y, prior, lam)
        _, _, numeric = oracle.minimize_posterior_objective(X, Y, prior, lam)
        worst_rel = max(worst_rel, abs(best - numeric) / abs(numeric))
        free = S > 0
        for _ in range(perturbations):
            dU = 1e-2 * rng.standard_normal(S.shape) * free
            S2 = np.where(free, S * np.exp(0.1 * rng.standard_normal(S.shape)), 0.0)
            if oracle.posterior_objective(post.U + dU, S2, X, Y, prior, lam) < best - 1e-12:
                beaten += 1
    return worst_rel, beaten


def check_posterior_optimality(level):
    count = 1000 if level == "full" else 100
    worst_rel, beaten = posterior_optimality(perturbations=count)
    return (worst_rel <= 1e-5 and beaten == 0,
            f"rel gap {worst_rel:.2e}, {beaten} better perturbations", "1e-5 relative, 0 better")


def check_kl(level, instances=20):
    rng = np.random.default_rng(14)
    worst = 0.0
    for k in range(instances):
        n = int(rng.integers(2, 8))
        zero_diag = bool(k % 2)
        sigma = float(rng.uniform(0.1, 2.0))
        U0 = rng.standard_normal((n, n))
        U = rng.standard_normal((n, n))
        if zero_diag:
            np.fill_diagonal(U0, 0.0)
            np.fill_diagonal(U, 0.0)
        s = rng.uniform(0.05, 3.0, n)
        prior = lae_bound.GaussianPrior(U0, sigma, zero_diag)
        post = lae_bound.GaussianPosterior(U, s, zero_diag)
        ref = 0.0
        for i in range(n):
            for j in range(n):
                if zero_diag and i == j:
                    continue
                ref += 0.5 * (math.log(sigma**2 / s[j]) + s[j] / sigma**2 - 1
                              + (U[i, j] - U0[i, j]) ** 2 / sigma**2)
        worst = max(worst, abs(lae_bound.kl_divergence(post, prior) - ref))
    return worst <= 1e-10, f"max error {worst:.2e}", "1e-10"


def mgf_mc_instances(instances=10, samples=10**6, seed=15):
    """z-scores of the Monte Carlo log-MGF against the closed form at half the threshold."""
    rng = np.random.default_rng(seed)
    z = []
    for k in range(instances):
        n = int(rng.integers(2, 5))
        _, corr = _random_lae(rng, n, 0.5)
        prior = lae_bound.GaussianPrior(0.3 * rng.standard_normal((n, n)),
                                        float(rng.uniform(0.3, 1.0)), zero_diag=False)
        lam = 0.5 * lae_bound.mgf_threshold(prior, corr)
        closed = lae_bound.log_mgf_prior(prior, corr, lam).value
        est = oracle.mc_log_mgf(prior, corr, lam, samples, seed=seed * 100 + k)
        z.append((est.mean - closed) / est.stderr)
    return np.array(z)


def check_log_mgf_mc(level):
    samples = 10**6 if level == "full" else 10**5
    z = mgf_mc_instances(samples=samples)
    worst = float(np.max(np.abs(z)))
    return worst <= 5.0, f"max |z| = {worst:.2f}", "5 jackknife stderr"


def zero_diag_gaps(instances=100, seed=16):
    """``log_mgf_prior - direct per-row value`` on random zero-diagonal instances."""
    rng = np.random.default_rng(seed)
    gaps = []
    for _ in range(instances):
        n = int(rng.integers(2, 21))
        _, corr = _random_lae(rng, n, 0.5, factorized=n > 8)
        U0 = 0.3 * rng.standard_normal((n, n))
        np.fill_diagonal(U0, 0.0)
        prior = lae_bound.GaussianPrior(U0, float(rng.uniform(0.1, 1.0)), zero_diag=True)
        lam = float(rng.uniform(0.05, 0.95)) * lae_bound.mgf_threshold(prior, corr)
        gaps.append(lae_bound.log_mgf_prior(prior, corr, lam).value
                    - oracle.direct_eq6_log_mgf(prior, corr, lam))
    return np.array(gaps)


def check_zero_diag_bound(level):
    gaps = zero_diag_gaps(instances=100 if level == "full" else 30)
    return bool(gaps.min() >= -1e-9), f"min gap {gaps.min():.3e}", "gap >= -1e-9"


def psi_mc_instances(instances=5, inner=100_000, seed=17):
    """(z-scores of nested MC vs exact Psi, whether Psi <= its upper bound) per instance."""
    rng = np.random.default_rng(seed)
    z, ordered = [], []
    for k in range(instances):
        model = random_gaussian_model(rng)
        U0 = model.W_star + 0.2 * rng.standard_normal(model.W_star.shape)
        W = mlr_bound.gaussian_prior_samples(U0, 0.3, 10, seed=seed * 100 + k)
        lam, m = 0.1, 5
        exact = mlr_bound.psi_exact(model, W, lam, m)
        upper = mlr_bound.psi_upper(model, W, lam, m)
        est = oracle.mc_psi(model, W, lam, m, inner, seed=seed * 1000 + k)
        z.append((est.mean - exact) / est.stderr)
        ordered.append(exact <= upper)
    return np.array(z), np.array(ordered)


def check_psi_mc(level):
    z, ordered = psi_mc_instances(inner=100_000 if level == "full" else 20_000)
    worst = float(np.max(np.abs(z)))
    return (worst <= 5.0 and bool(ordered.all()),
            f"max |z| = {worst:.2f}, psi <= upper on all", "5 stderr")


def psi_trend(ms=(10, 100, 1000, 10**4, 10**6), seed=18):
    rng = np.random.default_rng(seed)
    model = random_gaussian_model(rng)
    U0 = model.W_star + 0.1 * rng.standard_normal(model.W_star.shape)
    sigma, lam = 0.2, 1.0
    cond = mlr_bound.convergence_condition_gaussian(model, U0, sigma, lam)
    W = mlr_bound.gaussian_prior_samples(U0, sigma, 200, seed=seed)
    return cond, np.array([mlr_bound.psi_exact(model, W, lam, m) for m in ms])


def check_psi_trend(level):
    cond, values = psi_trend()
    ok = cond.holds and bool(np.all(np.diff(values) < 0)) and values[-1] < 1e-3
    return ok, f"psi(m=1e6) = {values[-1]:.2e}", "strictly decreasing, < 1e-3 at m=1e6"


def check_ease_kkt(level, instances=5):
    rng = np.random.default_rng(19)
    worst = 0.0
    diag_ok = True
    for _ in range(instances):
        H = data.InteractionMatrix.from_dense(rng.random((5, 12)) < 0.4)
        gamma = float(rng.uniform(0.5, 20.0))
        W = ease.train_ease(H, gamma).W
        diag_ok &= bool(np.all(np.diag(W) == 0.0))
        worst = max(worst, float(np.max(np.abs(W - oracle.ease_kkt_solve(H, gamma)))))
    return worst <= 1e-6 and diag_ok, f"max entry error {worst:.2e}", "1e-6"


def bound_validity(trials=200, n=5, m=200, delta=0.05, p=0.5, sigma=0.001,
                   grid=DEFAULT_GRID, seed=20):
    """Fraction of regenerated datasets where the selected LH exceeds RH.

    The prior mean is an EASE model fitted once on an independent sample, so it does
    not depend on the data the bound is evaluated on.
    """
    rng = np.random.default_rng(seed)
    model = data.BernoulliModel.random(n, rng)
    Sigma_hh = data.exact_correlation(model)
    corr = lae_bound.correlations_from_holdout(Sigma_hh, p)
    W0 = ease.train_ease(data.sample_bernoulli(model, m, seed=seed), gamma=1.0).W
    violations = 0
    for t in range(trials):
        H = data.sample_bernoulli(model, m, seed=seed * 10_000 + t + 1)
        split = data.holdout_mask(H, p, seed=t)
        report = lae_bound.compute_bound(Sigma_hh, p, split.X, split.Y, W0, sigma, delta, grid,
                                         corr=corr)
        violations += report.best.LH > report.best.RH
    return violations / trials


def check_bound_validity(level):
    delta = 0.05
    rate = bound_validity(trials=200 if level == "full" else 20, delta=delta)
    limit = delta + 3 * math.sqrt(delta * (1 - delta) / 200)
    return rate <= limit, f"violation rate {rate:.3f}", f"<= {limit:.3f}"


CHECKS = {
    "published_rh_identity": (check_published_rh, ("quick", "full")),
    "holdout_correlations": (check_holdout_correlations, ("quick", "full")),
    "true_risk_enumeration": (check_true_risk, ("quick", "full")),
    "kl_entrywise": (check_kl, ("quick", "full")),
    "ease_kkt": (check_ease_kkt, ("quick", "full")),
    "posterior_optimality": (check_posterior_optimality, ("quick", "full")),
    "zero_diag_mgf_bound": (check_zero_diag_bound, ("quick", "full")),
    "log_mgf_monte_carlo": (check_log_mgf_mc, ("quick", "full")),
    "psi_monte_carlo": (check_psi_mc, ("quick", "full")),
    "psi_convergence_trend": (check_psi_trend, ("quick", "full")),
    "bound_validity": (check_bound_validity, ("full",)),
}


def run_checks(level="quick", names=None):
    if level not in ("quick", "full"):
        raise ValueError(f"level must be 'quick' or 'full', got {level!r}")
    results = []
    for name, (fn, levels) in CHECKS.items():
        if level not in levels or (names is not None and name not in names):
            continue
        start = time.perf_counter()
        try:
            passed, detail, tol = fn(level)
        except Exception as exc:  # a crashing check counts as a failure
            passed, detail, tol = False, f"{type(exc).__name__}: {exc}", "-"
        results.append(CheckResult(name, bool(passed), detail, tol,
                                   time.perf_counter() - start))
    return results

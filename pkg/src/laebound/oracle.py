"""Brute-force and Monte Carlo references for the closed forms.

These routes deliberately avoid the spectral shortcuts used by the main modules:
correlations come from exhaustive enumeration, MGFs and Psi from sampling, the
optimal posterior from a generic bound-constrained optimizer, and EASE from the
full KKT system.
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize
from scipy.special import logsumexp

from . import lae_bound
from .data import MAX_ENUMERATION_N, BernoulliModel, GaussianDataModel
from .errors import ArgumentError, CapacityError, DimensionError, DomainError


@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    stderr: float
    samples: int


# ---------------------------------------------------------------------------
# true risk and exhaustive LAE expectations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaskedBernoulli:
    """Generator of ``x = delta * h`` and ``y = (1 - delta) * h`` with keep rate p."""

    model: BernoulliModel
    p: float


def _draw_pairs(source, count, rng):
    if isinstance(source, GaussianDataModel):
        # factors via eigh so a singular Sigma_x is allowed
        wx, Vx = np.linalg.eigh(source.Sigma_x)
        Ax = Vx * np.sqrt(np.clip(wx, 0, None))
        we, Ve = np.linalg.eigh(source.Sigma_e)
        Ae = Ve * np.sqrt(np.clip(we, 0, None))
        x =source.mu_x + rng.standard_normal((count, source.n)) @ Ax.T
        y = x @ source.W_star.T + rng.standard_normal((count, source.p)) @ Ae.T
        return x, y
    if isinstance(source, MaskedBernoulli):
        model = source.model
        if model.enumerated:
            codes = rng.choice(model.probabilities.size, size=count, p=model.probabilities)
            h = ((codes[:, None] >> np.arange(model.n)) & 1).astype(float)
        else:
            h = (rng.random((count, model.n)) < model.marginals).astype(float)
        delta = (rng.random((count, model.n)) < source.p).astype(float)
        return delta * h, (1.0 - delta) * h
    raise ArgumentError("source must be a GaussianDataModel or MaskedBernoulli")


def mc_true_risk(source, W, samples, seed, batch=100_000):
    """Monte Carlo ``E ||y - W x||^2`` with its standard error."""
    if samples < 1:
        raise ArgumentError("samples must be positive")
    rng = np.random.default_rng(seed)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    losses = []
    left = samples
    while left:
        b = min(batch, left)
        x, y = _draw_pairs(source, b, rng)
        r = y - x @ W.T
        losses.append(np.sum(r * r, axis=1))
        left -= b
    losses = np.concatenate(losses)
    stderr = float(losses.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return EstimateWithError(float(losses.mean()), stderr, samples)


@dataclass(frozen=True)
class LaeEnumeration:
    """Exact second moments and risk of a masked Bernoulli model, from all (h, delta) pairs."""

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray

    @property
    def Sigma_xx(self):
        return self.x.T @ (self.weights[:, None] * self.x)

    @property
    def Sigma_xy(self):
        return self.x.T @ (self.weights[:, None] * self.y)

    @property
    def Sigma_yy(self):
        return self.y.T @ (self.weights[:, None] * self.y)

    def true_risk(self, W):
        W = np.asarray(W, dtype=float)
        r = self.y - self.x @ W.T
        return float(self.weights @ np.sum(r * r, axis=1))

    def triple(self, jitter=None):
        return lae_bound.correlation_triple(self.Sigma_xx, self.Sigma_xy, self.Sigma_yy, jitter)


def enumerate_lae_expectations(model, p):
    """Enumerate every coordinate state: absent, kept in x, or held out to y.

    Each of the ``3^n`` states has weight ``M(h) p^{|x|} (1 - p)^{|y|}``.
    """
    if model.n > MAX_ENUMERATION_N:
        raise CapacityError(f"enumeration supports n <= {MAX_ENUMERATION_N}, got {model.n}")
    if not 0.0 <= p <= 1.0:
        raise ArgumentError(f"p must lie in [0, 1], got {p}")
    n = model.n
    states = np.arange(3**n)
    digits = (states[:, None] // 3 ** np.arange(n)) % 3
    x = (digits == 1).astype(float)
    y = (digits == 2).astype(float)
    h_code = ((digits != 0).astype(np.int64) << np.arange(n)).sum(axis=1)
    if model.enumerated:
        prob_h = model.probabilities[h_code]
    else:
        q = model.marginals
        h = digits != 0
        prob_h = np.prod(np.where(h, q, 1.0 - q), axis=1)
    weights = prob_h * p ** x.sum(axis=1) * (1.0 - p) ** y.sum(axis=1)
    keep = weights > 0
    return LaeEnumeration(x=x[keep], y=y[keep], weights=weights[keep])


# ---------------------------------------------------------------------------
# Monte Carlo log-MGF and Psi
# ---------------------------------------------------------------------------


def _jackknife_log_mean(values, groups):
    """Log-mean-exp of ``values`` with a delete-a-group jackknife standard error."""
    N = values.size
    groups = max(2, min(groups, N))
    parts = np.array_split(values, groups)
    lse_total = logsumexp(values)
    estimate = lse_total - np.log(N)
    loo = []
    for part in parts:
        frac = np.exp(logsumexp(part) - lse_total)
        frac = min(frac, 1.0 - 1e-16)
        loo.append(lse_total + np.log1p(-frac) - np.log(N - part.size))
    loo = np.array(loo)
    var = (groups - 1) / groups * np.sum((loo - loo.mean()) ** 2)
    return float(estimate), float(np.sqrt(var))


def mc_log_mgf(prior, corr, lam, samples, seed, groups=100, batch=20_000):
    """``ln E_prior exp(lam R_true(W))`` by sampling the prior (zero diagonal honoured)."""
    if samples < 2:
        raise ArgumentError("need at least two samples")
    rng = np.random.default_rng(seed)
    values = np.empty(samples)
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        W = prior.sample(b, rng)
        R = np.einsum("bij,jk->bik", W, corr.sqrt_xx) + corr.B
        values[done:done + b] = lam * (np.einsum("bij,bij->b", R, R) + corr.c_log)
        done += b
    mean, stderr = _jackknife_log_mean(values, groups)
    return EstimateWithError(mean, stderr, samples)


def mc_psi(model, prior_samples, lam, m, inner_samples, seed, batch=20_000):
    """Nested Monte Carlo of ``ln E_W E_S exp(lam (R_true(W) - R_emp(W)))``.

    The outer average runs over the supplied weight samples; each inner expectation
    draws ``inner_samples`` datasets of size m. The reported standard error covers the
    inner sampling only, which is what differs from the exact per-W integrand.
    """
    W_all = np.asarray(prior_samples, dtype=float)
    if W_all.ndim == 2:
        W_all = W_all[None]
    if W_all.shape[1:] != model.W_star.shape:
        raise DimensionError("prior samples do not match W_star")
    rng = np.random.default_rng(seed)
    log_means, log_vars = [], []
    for W in W_all:
        D = model.W_star - W
        r_true = float(np.trace(D @ model.Sigma_x @ D.T + model.Sigma_e)
                       + np.sum((D @ model.mu_x) ** 2))
        vals = np.empty(inner_samples)
        done = 0
        while done < inner_samples:
            b = min(batch, inner_samples - done)
            x, y = _draw_pairs(model, b * m, rng)
            r = y - x @ W.T
            emp = np.sum(r * r, axis=1).reshape(b, m).mean(axis=1)
            vals[done:done + b] = lam * (r_true - emp)
            done += b
        shift = vals.max()
        e = np.exp(vals - shift)
        log_means.append(shift + np.log(e.mean()))
        log_vars.append(2 * shift + np.log(max(e.var(ddof=1), 1e-300)) - np.log(inner_samples))
    log_means, log_vars = np.array(log_means), np.array(log_vars)
    J = log_means.size
    log_F = logsumexp(log_means) - np.log(J)
    log_var_F = logsumexp(log_vars) - 2 * np.log(J)
    stderr = float(np.exp(0.5 * log_var_F - log_F))
    return EstimateWithError(float(log_F), stderr, J * inner_samples)


# ---------------------------------------------------------------------------
# zero-diagonal log-MGF by per-row decompositions
# ---------------------------------------------------------------------------


def direct_eq6_log_mgf(prior, corr, lam):
    """Exact zero-diagonal log-MGF with one eigendecomposition per row, O(n^4).

    Row i of W has entry i fixed at 0, so ``W_i Sigma_xx^{1/2}`` is Gaussian with mean
    ``mu^i`` and covariance ``A_i = sigma^2 (Sigma_xx - c_i c_i^T)``, where c_i is column
    i of ``Sigma_xx^{1/2}``. The zero eigenvalue of A_i contributes nothing; the mean
    term is written as ``(v_j . mu^i)^2`` so nothing is divided by an eigenvalue.
    """
    if not prior.zero_diag:
        raise ArgumentError("direct per-row evaluation needs a zero-diagonal prior")
    n = corr.n
    sigma2 = prior.sigma**2
    total = lam * corr.c_log
    per_row = []
    for i in range(n):
        c = corr.sqrt_xx[:, i]
        A = sigma2 * (corr.Sigma_xx - np.outer(c, c))
        eta, V = np.linalg.eigh(0.5 * (A + A.T))
        eta = np.clip(eta, 0.0, None)
        mu = corr.sqrt_xx @ prior.U0[i] + corr.B[i]
        per_row.append((eta, V, mu))
    top = max(float(eta.max()) for eta, _, _ in per_row)
    threshold = np.inf if top <= 0 else 1.0 / (2.0 * top)
    if not 0 < lam < threshold:
        raise DomainError(lam, threshold)
    for eta, V, mu in per_row:
        proj = V.T @ mu
        denom = 1.0 - 2.0 * lam * eta
        total += lam * float(np.sum(proj**2 / denom)) - 0.5 * float(np.sum(np.log(denom)))
    return float(total)


# ---------------------------------------------------------------------------
# EASE via the full KKT system
# ---------------------------------------------------------------------------


def ease_kkt_solve(H, gamma):
    """Solve ``min ||H - W H||^2 + gamma ||W||^2`` s.t. ``W_ii = 0`` as one linear KKT system.

    Unknowns are ``vec(W)`` (row-major) and one multiplier per diagonal entry.
    """
    H = np.asarray(H.toarray() if hasattr(H, "toarray") else H, dtype=float)
    n = H.shape[0]
    HHt = H @ H.T
    G = HHt + gamma * np.eye(n)
    Q = 2.0 * np.kron(np.eye(n), G)
    A = np.zeros((n, n * n))
    A[np.arange(n), np.arange(n) * (n + 1)] = 1.0
    K = np.block([[Q, A.T], [A, np.zeros((n, n))]])
    rhs = np.concatenate([2.0 * HHt.ravel(), np.zeros(n)])
    sol = np.linalg.solve(K, rhs)
    return sol[: n * n].reshape(n, n)


# ---------------------------------------------------------------------------
# posterior objective and its numerical minimizer
# ---------------------------------------------------------------------------


def _free_mask(shape, zero_diag):
    mask = np.ones(shape, dtype=bool)
    if zero_diag:
        np.fill_diagonal(mask, False)
    return mask


def posterior_objective(U, S, X, Y, prior, lam):
    """``E_rho[R_emp] + KL(rho || prior)/lam`` for a general entry-wise Gaussian ``N(U, S)``.

    S is a full variance matrix; entries outside the free set must be zero and are ignored.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    m = X.shape[1]
    free = _free_mask(U.shape, prior.zero_diag)
    sigma2 = prior.sigma**2
    r = Y - U @ X
    x_sq = np.sum(X * X, axis=1)
    emp = (np.sum(r * r) + np.sum(np.where(free, S, 0.0) * x_sq[None, :])) / m
    Sf = S[free]
    dU = (U - prior.U0)[free]
    kl = 0.5 * np.sum(np.log(sigma2 / Sf) + Sf / sigma2 - 1.0 + dU**2 / sigma2)
    return float(emp + kl / lam)


def minimize_posterior_objective(X, Y, prior, lam, tol=1e-14):
    """Numerically minimize :func:`posterior_objective` with L-BFGS-B over the free entries.

    Variances are bounded below by a tiny positive constant (a box projection). Returns
    ``(U, S, value)``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    m = X.shape[1]
    shape = prior.U0.shape
    free = _free_mask(shape, prior.zero_diag)
    k = int(free.sum())
    sigma2 = prior.sigma**2
    x_sq = np.sum(X * X, axis=1)
    col_sq = np.broadcast_to(x_sq, shape)[free]

    def unpack(z):
        U = np.zeros(shape)
        U[free] = z[:k]
        S = np.zeros(shape)
        S[free] = z[k:]
        return U, S

    def fun(z):
        U, S = unpack(z)
        r = Y - U @ X
        Sf = z[k:]
        dU = z[:k] - prior.U0[free]
        val = (np.sum(r * r) + Sf @ col_sq) / m
        val += 0.5 * np.sum(np.log(sigma2 / Sf) + Sf / sigma2 - 1.0 + dU**2 / sigma2) / lam
        gU = (-2.0 * r @ X.T / m)[free] + dU / (sigma2 * lam)
        gS = col_sq / m + 0.5 * (1.0 / sigma2 - 1.0 / Sf) / lam
        return val, np.concatenate([gU, gS])

    z0 = np.concatenate([prior.U0[free], np.full(k, sigma2)])
    bounds = [(None, None)] * k + [(1e-12 * sigma2, None)] * k
    res = scipy.optimize.minimize(fun, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                                  options={"ftol": tol, "gtol": 1e-12, "maxiter": 20_000,
                                           "maxcor": 50})
    U, S = unpack(res.x)
    return U, S, float(res.fun)

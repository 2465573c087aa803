"""PAC-Bayes bound for linear autoencoders under a relaxed MSE.

The pipeline for one model W and a grid of inverse temperatures:

1. correlations of masked input/target from the item correlation and keep rate p,
2. optimal entry-wise Gaussian posterior around the prior mean,
3. KL divergence, expected empirical risk and expected true risk of that posterior,
4. log moment generating function of the true risk under the prior,
5. the union-bounded right-hand side for every lambda and its minimum.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import numerics
from .data import InteractionMatrix
from .errors import (
    ArgumentError,
    DimensionError,
    DomainError,
    NoFeasibleLambdaError,
    NumericalError,
    SingularMatrixError,
)

RESIDUAL_BLOCK = 1 << 24


@dataclass(frozen=True)
class CorrelationTriple:
    """Second moments ``E[x x^T]``, ``E[x y^T]``, ``E[y y^T]`` plus derived quantities.

    ``B = -Sigma_xy^T Sigma_xx^{-1/2}`` and ``c_log = tr(Sigma_yy) - ||B||_F^2``, so that
    ``R_true(W) = ||W Sigma_xx^{1/2} + B||_F^2 + c_log``.
    """

    Sigma_xx: np.ndarray
    Sigma_xy: np.ndarray
    Sigma_yy: np.ndarray
    sqrt_xx: np.ndarray
    inv_sqrt_xx: np.ndarray
    B: np.ndarray
    c_log: float
    decomposition: numerics.SpectralDecomposition
    jitter: float = 0.0

    @property
    def n(self):
        return self.Sigma_xx.shape[0]


def correlation_triple(Sigma_xx, Sigma_xy, Sigma_yy, jitter=None):
    """Build a triple; if Sigma_xx is not PD, add ``jitter * I`` when a jitter is given."""
    Sigma_xx = np.asarray(Sigma_xx, dtype=float)
    Sigma_xy = np.asarray(Sigma_xy, dtype=float)
    Sigma_yy = np.asarray(Sigma_yy, dtype=float)
    n = Sigma_xx.shape[0]
    if Sigma_xx.shape != (n, n) or Sigma_xy.shape != (n, n) or Sigma_yy.shape != (n, n):
        raise DimensionError("correlation matrices must all be n x n")
    dec = numerics.sym_eig(Sigma_xx)
    applied = 0.0
    if dec.bottom <= numerics.pd_tol(dec.top):
        if not jitter:
            raise SingularMatrixError(dec.bottom, numerics.pd_tol(dec.top))
        applied = float(jitter)
        Sigma_xx = Sigma_xx + applied * np.eye(n)
        dec = numerics.sym_eig(Sigma_xx)
    sqrt_xx = numerics.psd_sqrt(Sigma_xx, dec)
    inv_sqrt_xx = numerics.psd_inv_sqrt(Sigma_xx, dec)
    B = -Sigma_xy.T @ inv_sqrt_xx
    c_log = float(np.trace(Sigma_yy) - np.sum(B * B))
    return CorrelationTriple(Sigma_xx, Sigma_xy, Sigma_yy, sqrt_xx, inv_sqrt_xx, B, c_log,
                             dec, applied)


def correlations_from_holdout(Sigma_hh, p, jitter=None):
    """Correlations of ``x = delta * h`` and ``y = (1 - delta) * h`` with ``P(delta_i = 1 | h_i = 1) = p``."""
    if not 0.0 < p <= 1.0:
        raise ArgumentError(f"p must lie in (0, 1], got {p}")
    Sigma_hh = np.asarray(Sigma_hh, dtype=float)
    D = np.diag(np.diag(Sigma_hh))
    q = 1.0 - p
    Sigma_xx = p * p * Sigma_hh + p * q * D
    Sigma_yy = q * q * Sigma_hh + p * q * D
    Sigma_xy = p * q * (Sigma_hh - D)
    return correlation_triple(Sigma_xx, Sigma_xy, Sigma_yy, jitter=jitter)


def true_risk_closed(corr, W):
    """``R_true(W) = ||W Sigma_xx^{1/2} - Sigma_xy^T Sigma_xx^{-1/2}||^2 - ||Sigma_xy^T Sigma_xx^{-1/2}||^2 + tr(Sigma_yy)``."""
    W = np.asarray(W, dtype=float)
    if W.shape != (corr.n, corr.n):
        raise DimensionError(f"W must be {corr.n} x {corr.n}, got {W.shape}")
    R = W @ corr.sqrt_xx + corr.B
    return float(np.sum(R * R) + corr.c_log)


# ---------------------------------------------------------------------------
# data helpers
# ---------------------------------------------------------------------------


def _as_operand(X):
    if isinstance(X, InteractionMatrix):
        return X.matrix
    if sp.issparse(X):
        return sp.csr_matrix(X, dtype=np.float64)
    return np.atleast_2d(np.asarray(X, dtype=float))


def _dense(M):
    return M.toarray() if sp.issparse(M) else M


def residual_sq(Y, U, X):
    """``||Y - U X||_F^2`` evaluated in user blocks to bound memory."""
    Xo, Yo = _as_operand(X), _as_operand(Y)
    if Xo.shape[0] != U.shape[1] or Yo.shape[0] != U.shape[0] or Xo.shape[1] != Yo.shape[1]:
        raise DimensionError(f"shape mismatch: Y {Yo.shape}, U {U.shape}, X {Xo.shape}")
    m = Xo.shape[1]
    if sp.issparse(Xo):
        Xo = Xo.tocsc()
    if sp.issparse(Yo):
        Yo = Yo.tocsc()
    block = max(1, RESIDUAL_BLOCK // max(1, U.shape[0]))
    total = 0.0
    for start in range(0, m, block):
        cols = slice(start, min(m, start + block))
        Xb = Xo[:, cols]
        P = np.asarray(Xb.T @ U.T).T if sp.issparse(Xb) else U @ Xb
        P -= _dense(Yo[:, cols])
        total += float(np.sum(P * P))
    return total


def emp_risk(X, Y, W):
    """Relaxed MSE ``(1/m) ||Y - W X||_F^2``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    m = _as_operand(X).shape[1]
    return residual_sq(Y, W, X) / m


@dataclass(frozen=True)
class DataStats:
    """Sufficient statistics of (X, Y) for the posterior: ``X X^T``, ``Y X^T``, row norms of X."""

    XXt: np.ndarray
    YXt: np.ndarray
    x_sq_norms: np.ndarray
    m: int


def data_stats(X, Y):
    Xo, Yo = _as_operand(X), _as_operand(Y)
    if Xo.shape[1] != Yo.shape[1]:
        raise DimensionError("X and Y must have the same number of columns")
    XXt = np.asarray(_dense(Xo @ Xo.T), dtype=float)
    YXt = np.asarray(_dense(Yo @ Xo.T), dtype=float)
    return DataStats(XXt=XXt, YXt=YXt, x_sq_norms=np.diag(XXt).copy(), m=Xo.shape[1])


# ---------------------------------------------------------------------------
# Gaussian prior / posterior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianPrior:
    """``W_ij ~ N(U0_ij, sigma^2)`` independently; with ``zero_diag`` the diagonal is fixed at 0."""

    U0: np.ndarray
    sigma: float
    zero_diag: bool = True

    def __post_init__(self):
        U0 = np.atleast_2d(np.asarray(self.U0, dtype=float))
        object.__setattr__(self, "U0", U0)
        if not self.sigma > 0:
            raise ArgumentError(f"sigma must be positive, got {self.sigma}")
        if self.zero_diag:
            if U0.shape[0] != U0.shape[1]:
                raise DimensionError("zero-diagonal priors need a square mean")
            if np.any(np.diag(U0) != 0):
                raise ArgumentError("zero-diagonal prior requires diag(U0) == 0 exactly")

    def sample(self, count, rng):
        W = self.U0[None] + self.sigma * rng.standard_normal((count,) + self.U0.shape)
        if self.zero_diag:
            idx = np.arange(self.U0.shape[0])
            W[:, idx, idx] = 0.0
        return W


@dataclass(frozen=True)
class GaussianPosterior:
    """Entry-wise Gaussian with mean U and variance ``s[j]`` for every entry in column j."""

    U: np.ndarray
    s: np.ndarray
    zero_diag: bool = True

    def __post_init__(self):
        if np.any(self.s <= 0):
            raise ArgumentError("posterior variances must be positive")
        if self.zero_diag and np.any(np.diag(self.U) != 0):
            raise ArgumentError("zero-diagonal posterior requires diag(U) == 0 exactly")

    def column_counts(self):
        """Number of random entries in each column of W."""
        rows = self.U.shape[0]
        return rows - 1 if self.zero_diag else rows

    def variance_matrix(self):
        S = np.broadcast_to(self.s, self.U.shape).copy()
        if self.zero_diag:
            np.fill_diagonal(S, 0.0)
        return S

    def sample(self, count, rng):
        W = self.U[None] + np.sqrt(self.variance_matrix())[None] * rng.standard_normal(
            (count,) + self.U.shape)
        return W


def optimal_posterior(X, Y, prior, lam, m=None, stats=None):
    """Minimizer of ``E_rho[R_emp] + KL(rho || prior) / lam`` over entry-wise Gaussians.

    Unconstrained: ``U = (Y X^T/m + c U0) K^{-1}`` with ``K = X X^T/m + c I`` and
    ``c = 1/(2 lam sigma^2)``. Zero diagonal: a Lagrange vector
    ``x = 2 diag(U_free) / diag(K^{-1})`` is subtracted, ``U = U_free - diag(x) K^{-1} / 2``.
    Column variances are ``1 / (2 lam |X_j|^2 / m + 1/sigma^2)`` in both cases.
    """
    if not lam > 0:
        raise ArgumentError(f"lambda must be positive, got {lam}")
    stats = stats if stats is not None else data_stats(X, Y)
    m = stats.m if m is None else m
    if m != stats.m:
        raise DimensionError(f"m={m} does not match the {stats.m} columns of X")
    sigma2 = prior.sigma**2
    c = 1.0 / (2.0 * lam * sigma2)
    n = stats.XXt.shape[0]
    if prior.U0.shape != stats.YXt.shape:
        raise DimensionError(f"prior mean {prior.U0.shape} does not match Y X^T {stats.YXt.shape}")
    K = stats.XXt / m
    K[np.diag_indices(n)] += c
    R = stats.YXt / m + c * prior.U0
    try:
        factor = scipy.linalg.cho_factor(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"X X^T/m + I/(2 lam sigma^2) is not positive definite: {exc}") from exc
    if prior.zero_diag:
        Kinv = scipy.linalg.cho_solve(factor, np.eye(n))
        Kinv = 0.5 * (Kinv + Kinv.T)
        U = R @ Kinv
        x = 2.0 * np.diag(U) / np.diag(Kinv)
        U -= 0.5 * x[:, None] * Kinv
        np.fill_diagonal(U, 0.0)
    else:
        U = scipy.linalg.cho_solve(factor, R.T).T
    s = 1.0 / (2.0 * lam * stats.x_sq_norms / m + 1.0 / sigma2)
    return GaussianPosterior(U=U, s=s, zero_diag=prior.zero_diag)


def kl_divergence(post, prior):
    """KL between entry-wise Gaussians, summed over the random entries only.

    Equal to ``(1/2)[N(2 ln sigma - 1) - sum(ln S_kl - S_kl/sigma^2) + ||U - U0||^2/sigma^2]``
    with N the number of random entries; evaluated per column as ``r - 1 - ln r`` with
    ``r = s/sigma^2`` to avoid cancellation when s is close to sigma^2.
    """
    if post.zero_diag != prior.zero_diag:
        raise ArgumentError("posterior and prior disagree on the zero-diagonal constraint")
    if post.U.shape != prior.U0.shape:
        raise DimensionError("posterior and prior shapes differ")
    sigma2 = prior.sigma**2
    t = post.s / sigma2 - 1.0
    per_entry = t - np.log1p(t)
    variance_part = post.column_counts() * float(np.sum(per_entry))
    dU = post.U - prior.U0
    return 0.5 * (variance_part + float(np.sum(dU * dU)) / sigma2)


def expected_emp_risk(post, X, Y, m=None, stats=None):
    """``(1/m)||Y - U X||^2 + (k/m) sum_j s_j ||X_j||^2`` with k the random entries per column."""
    Xo = _as_operand(X)
    m = Xo.shape[1] if m is None else m
    x_sq = stats.x_sq_norms if stats is not None else np.asarray(
        _dense(Xo.multiply(Xo).sum(axis=1)) if sp.issparse(Xo) else np.sum(Xo * Xo, axis=1)
    ).ravel()
    resid = residual_sq(Y, post.U, X)
    return (resid + post.column_counts() * float(post.s @ x_sq)) / m


def expected_true_risk(post, corr):
    """``||Sigma_xy^T Sigma_xx^{-1/2} - U Sigma_xx^{1/2}||^2 + k sum_j s_j (Sigma_xx)_jj + c_log``."""
    if post.U.shape != (corr.n, corr.n):
        raise DimensionError("posterior shape does not match the correlations")
    R = post.U @ corr.sqrt_xx + corr.B
    variance = post.column_counts() * float(post.s @ np.diag(corr.Sigma_xx))
    return float(np.sum(R * R) + variance + corr.c_log)


class LogMgf(NamedTuple):
    value: float
    is_upper_bound: bool


def mgf_threshold(prior, corr):
    """Largest admissible lambda, ``1/(2 eta_1)`` with eta_1 the top eigenvalue of sigma^2 Sigma_xx."""
    eta1 = prior.sigma**2 * corr.decomposition.top
    return math.inf if eta1 <= 0 else 1.0 / (2.0 * eta1)


def log_mgf_prior(prior, corr, lam):
    """``ln E_prior exp(lam R_true(W))`` for the unconstrained entry-wise Gaussian prior.

    With ``A = sigma^2 Sigma_xx = S^T diag(eta) S`` and ``mu^i = Sigma_xx^{1/2} U0_i^T + B_i^T``,
    the value is ``lam c_log + sum_ij [lam (S_j mu^i)^2 / (1 - 2 lam eta_j) - ln(1 - 2 lam eta_j)/2]``.
    A reuses the eigenvectors of Sigma_xx, so the cost is one n x n product. For a
    zero-diagonal prior the unconstrained value is returned as an upper bound.
    """
    if prior.U0.shape != (corr.n, corr.n):
        raise DimensionError("prior mean does not match the correlations")
    threshold = mgf_threshold(prior, corr)
    if not 0 < lam < threshold:
        raise DomainError(lam, threshold)
    dec = corr.decomposition
    eta = prior.sigma**2 * np.maximum(dec.eigenvalues, 0.0)
    M = corr.sqrt_xx @ prior.U0.T + corr.B.T  # column i is mu^i
    SM = dec.eigenvectors @ M
    denom = 1.0 - 2.0 * lam * eta
    rows = prior.U0.shape[0]
    mean_part = lam * float(np.sum(np.sum(SM * SM, axis=1) / denom))
    log_part = -0.5 * rows * float(np.sum(np.log1p(-2.0 * lam * eta)))
    return LogMgf(lam * corr.c_log + mean_part + log_part, bool(prior.zero_diag))


# ---------------------------------------------------------------------------
# the bound over a lambda grid
# ---------------------------------------------------------------------------


@dataclass
class BoundRecord:
    lam: float
    emp_risk_exp: float
    kl: float
    log_mgf: float
    ln_L_over_delta: float
    LH: float
    RH: float
    mgf_is_upper_bound: bool
    rejected: str = None

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        order = ["lambda", "emp_risk_exp", "kl", "log_mgf", "ln_L_over_delta", "LH", "RH",
                 "mgf_is_upper_bound", "rejected"]
        return {k: d[k] for k in order}


@dataclass
class BoundReport:
    grid: list
    best_index: int
    delta: float
    sigma: float
    p: float
    L: int
    zero_diag: bool = True
    jitter: float = 0.0

    @property
    def best(self):
        return self.grid[self.best_index]

    def to_dict(self):
        return {
            "delta": self.delta,
            "sigma": self.sigma,
            "p": self.p,
            "L": self.L,
            "zero_diag": self.zero_diag,
            "jitter": self.jitter,
            "best_index": self.best_index,
            "grid": [r.to_dict() for r in self.grid],
        }

    def to_text(self):
        head = (f"{'lambda':>10} {'emp':>14} {'kl':>12} {'log_mgf':>16} {'ln_L_over_delta':>15} "
                f"{'LH':>14} {'RH':>14}  rejected")
        lines = [head]
        for k, r in enumerate(self.grid):
            fmt = lambda v: "nan" if v is None else f"{v:.6f}"  # noqa: E731
            mark = "*" if k == self.best_index else " "
            lines.append(
                f"{r.lam:>10g} {fmt(r.emp_risk_exp):>14} {fmt(r.kl):>12} {fmt(r.log_mgf):>16} "
                f"{fmt(r.ln_L_over_delta):>15} {fmt(r.LH):>14} {fmt(r.RH):>14}{mark} "
                f"{r.rejected or ''}"
            )
        return "\n".join(lines)


def rh_value(emp, kl, ln_L_over_delta, log_mgf, lam):
    return emp + (kl + ln_L_over_delta + log_mgf) / lam


def _check_grid(grid):
    grid = [float(v) for v in grid]
    if not grid:
        raise ArgumentError("lambda grid is empty")
    if any(not v > 0 for v in grid):
        raise ArgumentError("lambda values must be positive")
    if len(set(grid)) != len(grid):
        raise ArgumentError("lambda values must be distinct")
    return grid


def compute_bound(Sigma_hh, p, X, Y, W_model, sigma, delta, grid, zero_diag=True,
                  jitter=None, corr=None, workers=1):
    """Evaluate the bound at every lambda of a pre-registered grid.

    The prior is centred on ``W_model``. Every lambda counts toward ``L`` in the
    ``ln(L/delta)`` term, including those rejected because the prior MGF diverges.
    Pass ``corr`` to reuse correlations across models.
    """
    if not 0.0 < p < 1.0:
        raise ArgumentError(f"p must lie in (0, 1), got {p}")
    if not 0.0 < delta < 1.0:
        raise ArgumentError(f"delta must lie in (0, 1), got {delta}")
    if not sigma > 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    grid = _check_grid(grid)
    W_model = np.asarray(W_model, dtype=float)
    if zero_diag and np.any(np.diag(W_model) != 0):
        raise ArgumentError("zero-diagonal mode needs a model with diag(W) == 0")
    if corr is None:
        corr = correlations_from_holdout(Sigma_hh, p, jitter=jitter)
    prior = GaussianPrior(W_model, sigma, zero_diag=zero_diag)
    stats = data_stats(X, Y)
    L = len(grid)
    ln_L_over_delta = math.log(L / delta)

    def evaluate(lam):
        post = optimal_posterior(X, Y, prior, lam, stats=stats)
        kl = kl_divergence(post, prior)
        emp = expected_emp_risk(post, X, Y, stats=stats)
        lh = expected_true_risk(post, corr)
        try:
            mgf = log_mgf_prior(prior, corr, lam)
        except DomainError as exc:
            return BoundRecord(lam, emp, kl, None, ln_L_over_delta, lh, None, prior.zero_diag,
                               rejected=str(exc))
        rh = rh_value(emp, kl, ln_L_over_delta, mgf.value, lam)
        return BoundRecord(lam, emp, kl, mgf.value, ln_L_over_delta, lh, rh, mgf.is_upper_bound)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(evaluate, grid))
    else:
        records = [evaluate(lam) for lam in grid]
    feasible = [k for k, r in enumerate(records) if r.rejected is None]
    if not feasible:
        raise NoFeasibleLambdaError(mgf_threshold(prior, corr))
    best = min(feasible, key=lambda k: records[k].RH)
    return BoundReport(grid=records, best_index=best, delta=delta, sigma=sigma, p=p, L=L,
                       zero_diag=zero_diag, jitter=corr.jitter)

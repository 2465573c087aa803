"""Symmetric spectral primitives and log-domain reductions."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, NotPSDError, NumericalError, SingularMatrixError

SYMMETRY_TOL = 1e-10
CLAMP_RTOL = 1e-10
PD_RTOL = 1e-12


@dataclass(frozen=True)
class SpectralDecomposition:
    """``M = S.T @ diag(eigenvalues) @ S`` with eigenvectors stored as the rows of ``S``.

    Eigenvalues are sorted in non-increasing order.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def top(self):
        return float(self.eigenvalues[0])

    @property
    def bottom(self):
        return float(self.eigenvalues[-1])

    def reconstruct(self, values=None):
        """Return ``S.T @ diag(values) @ S`` (defaults to the eigenvalues themselves)."""
        values = self.eigenvalues if values is None else np.asarray(values, dtype=float)
        S = self.eigenvectors
        return (S.T * values) @ S


def _as_symmetric(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asym > SYMMETRY_TOL * scale:
        raise DimensionError(f"matrix is not symmetric (max |M - M^T| = {asym:.3g})")
    return 0.5 * (M + M.T)


def clamp_tol(top_eigenvalue):
    return max(1.0, top_eigenvalue) * CLAMP_RTOL


def pd_tol(top_eigenvalue):
    return max(1.0, top_eigenvalue) * PD_RTOL


def sym_eig(M):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Each eigenvector is signed so that its first nonzero component is positive,
    which makes the output deterministic for a given input.
    """
    M = _as_symmetric(M)
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        finite = np.all(np.isfinite(M))
        raise NumericalError(
            f"eigensolver failed to converge (n={M.shape[0]}, finite={finite}, "
            f"max|M|={np.max(np.abs(M)) if M.size else 0:.3g}): {exc}"
        ) from exc
    order = np.argsort(-w, kind="stable")
    w = w[order]
    S = V[:, order].T.copy()
    for row in S:
        nz = np.flatnonzero(np.abs(row) > 1e-14)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return SpectralDecomposition(eigenvalues=w, eigenvectors=S)


def _clamped(dec):
    w = dec.eigenvalues
    tol = clamp_tol(dec.top if w.size else 0.0)
    if w.size and w[-1] < -tol:
        raise NotPSDError(float(w[-1]), tol)
    return np.maximum(w, 0.0)


def psd_sqrt(M, decomposition=None):
    """Symmetric square root of a PSD matrix; tiny negative eigenvalues are clamped to 0."""
    dec = decomposition if decomposition is not None else sym_eig(M)
    return dec.reconstruct(np.sqrt(_clamped(dec)))


def psd_inv_sqrt(M, decomposition=None):
    """Inverse symmetric square root of a PD matrix."""
    dec = decomposition if decomposition is not None else sym_eig(M)
    w = dec.eigenvalues
    tol = pd_tol(dec.top if w.size else 0.0)
    if w.size and w[-1] <= tol:
        raise SingularMatrixError(float(w[-1]), tol)
    return dec.reconstruct(1.0 / np.sqrt(w))


def is_positive_definite(M):
    dec = sym_eig(M)
    return bool(dec.bottom > pd_tol(dec.top))


def logmeanexp(values, axis=None):
    """``log(mean(exp(values)))`` without overflow."""
    values = np.asarray(values, dtype=float)
    count = values.size if axis is None else values.shape[axis]
    return logsumexp(values, axis=axis) - np.log(count)

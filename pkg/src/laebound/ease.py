"""Closed-form EASE training and dense matrix persistence."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ArgumentError, DimensionError, NumericalError, ParseError

BINARY_MAGIC = b"LAEMAT1\n"


@dataclass
class EaseModel:
    W: np.ndarray
    gamma: float


def train_ease(H_train, gamma):
    """Solve ``min ||H - W H||_F^2 + gamma ||W||_F^2`` s.t. ``diag(W) = 0``.

    With ``P = (H H^T + gamma I)^{-1}`` the solution is ``W[j, i] = -P[i, j] / P[j, j]``
    off the diagonal. P is symmetric, so each row of W is a row of P scaled by
    its diagonal entry.
    """
    if gamma <= 0:
        raise ArgumentError(f"gamma must be positive, got {gamma}")
    if H_train.n < 2:
        raise DimensionError("EASE needs at least two items")
    G = H_train.gram()
    G[np.diag_indices_from(G)] += gamma
    try:
        factor = scipy.linalg.cho_factor(G, lower=True)
        P = scipy.linalg.cho_solve(factor, np.eye(G.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"H H^T + gamma I is not positive definite: {exc}") from exc
    P = 0.5 * (P + P.T)
    W = -P / np.diag(P)[:, None]
    np.fill_diagonal(W, 0.0)
    return EaseModel(W=W, gamma=float(gamma))


def ease_objective(H, W, gamma):
    Hd = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
    R = Hd - W @ Hd
    return float(np.sum(R * R) + gamma * np.sum(W * W))


# Text format: first line "rows cols", then one whitespace-separated row per line.
# Binary format: BINARY_MAGIC, a "rows cols\n" line, then row-major little-endian float64.


def save_matrix(path, M, binary=False):
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    rows, cols = M.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(f"{rows} {cols}\n".encode())
            fh.write(M.astype("<f8").tobytes(order="C"))
    else:
        with open(path, "w") as fh:
            fh.write(f"{rows} {cols}\n")
            for row in M:
                fh.write(" ".join(repr(float(v)) for v in row))
                fh.write("\n")


def load_matrix(path):
    with open(path, "rb") as fh:
        head = fh.read(len(BINARY_MAGIC))
        if head == BINARY_MAGIC:
            rows, cols = _parse_shape(fh.readline().decode(), 2)
            data = np.frombuffer(fh.read(), dtype="<f8")
            if data.size != rows * cols:
                raise ParseError(f"expected {rows * cols} values, found {data.size}")
            return data.reshape(rows, cols).astype(np.float64)
    with open(path) as fh:
        rows, cols = _parse_shape(fh.readline(), 1)
        out = np.empty((rows, cols))
        r = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            if r >= rows:
                raise ParseError("more rows than the header declares", line=lineno)
            try:
                values = [float(v) for v in line.split()]
            except ValueError:
                raise ParseError("non-numeric matrix entry", line=lineno) from None
            if len(values) != cols:
                raise ParseError(f"expected {cols} values, got {len(values)}", line=lineno)
            out[r] = values
            r += 1
        if r != rows:
            raise ParseError(f"expected {rows} rows, found {r}")
    return out


def _parse_shape(line, lineno):
    parts = line.split()
    try:
        rows, cols = int(parts[0]), int(parts[1])
    except (IndexError, ValueError):
        raise ParseError("expected shape header 'rows cols'", line=lineno) from None
    return rows, cols

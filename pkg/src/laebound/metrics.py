"""Top-K ranking metrics for implicit feedback with a hold-out target."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import InteractionMatrix
from .errors import ArgumentError, DimensionError

SCORE_BLOCK = 1 << 22


@dataclass
class RankingResult:
    recall_at_k: dict = field(default_factory=dict)
    ndcg_at_k: dict = field(default_factory=dict)
    users_evaluated: int = 0


def _csc(M):
    if isinstance(M, InteractionMatrix):
        M = M.matrix
    return sp.csc_matrix(M)


def _column_sets(M):
    M = _csc(M)
    return [M.indices[M.indptr[u]:M.indptr[u + 1]] for u in range(M.shape[1])]


def rank_predictions(W, X, exclude_input=True, k=None):
    """Per user, item indices ordered by score ``W @ x_u`` (descending, ties by index).

    With ``exclude_input`` the user's input items are dropped. ``k`` truncates each list.
    """
    W = np.asarray(W, dtype=float)
    Xc = _csc(X).astype(np.float64)
    n, m = Xc.shape
    if W.shape != (n, n):
        raise DimensionError(f"W must be {n} x {n}, got {W.shape}")
    inputs = _column_sets(Xc)
    block = max(1, SCORE_BLOCK // max(1, n))
    ranked = []
    for start in range(0, m, block):
        stop = min(m, start + block)
        scores = np.asarray(Xc[:, start:stop].T @ W.T)  # users x items
        if exclude_input:
            for r, u in enumerate(range(start, stop)):
                scores[r, inputs[u]] = -np.inf
        order = np.argsort(-scores, axis=1, kind="stable")
        for r, u in enumerate(range(start, stop)):
            length = n - inputs[u].size if exclude_input else n
            if k is not None:
                length = min(length, k)
            ranked.append(order[r, :length])
    return ranked


def _targets(ranked, Y):
    targets = _column_sets(Y)
    if len(targets) != len(ranked):
        raise DimensionError("ranked lists and Y disagree on the number of users")
    return targets


def _check_k(K):
    if K < 1:
        raise ArgumentError(f"K must be at least 1, got {K}")


def recall_at_k(ranked, Y, K):
    """Mean over users with a nonempty target of ``|top-K & target| / min(K, |target|)``."""
    _check_k(K)
    values = []
    for items, target in zip(ranked, _targets(ranked, Y)):
        if target.size == 0:
            continue
        hits = np.isin(items[:K], target).sum()
        values.append(hits / min(K, target.size))
    return float(np.mean(values)) if values else 0.0


def ndcg_at_k(ranked, Y, K):
    """Binary-relevance NDCG@K averaged over users with a nonempty target."""
    _check_k(K)
    discounts = 1.0 / np.log2(np.arange(2, K + 2))
    values = []
    for items, target in zip(ranked, _targets(ranked, Y)):
        if target.size == 0:
            continue
        top = items[:K]
        dcg = float(discounts[: top.size][np.isin(top, target)].sum())
        idcg = float(discounts[: min(K, target.size)].sum())
        values.append(dcg / idcg)
    return float(np.mean(values)) if values else 0.0


def evaluate(W, X, Y, ks=(50, 100), exclude_input=True):
    """Recall@K and NDCG@K for every K in ``ks``."""
    ks = sorted({int(k) for k in ks})
    for K in ks:
        _check_k(K)
    ranked = rank_predictions(W, X, exclude_input=exclude_input, k=max(ks))
    users = sum(1 for t in _column_sets(Y) if t.size)
    return RankingResult(
        recall_at_k={K: recall_at_k(ranked, Y, K) for K in ks},
        ndcg_at_k={K: ndcg_at_k(ranked, Y, K) for K in ks},
        users_evaluated=users,
    )

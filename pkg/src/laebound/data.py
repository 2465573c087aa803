"""Interaction matrices, hold-out masking, correlation estimates and synthetic generators.

Interaction matrices are item x user (n x m) binary sparse matrices: ``H[i, j] = 1`` when
user ``j`` interacted with item ``i``.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import numerics
from .errors import ArgumentError, CapacityError, DimensionError, EmptyDatasetError, ParseError

log = logging.getLogger(__name__)

MAX_ENUMERATION_N = 12
DENSE_WARN_N = 20_000


@dataclass
class InteractionMatrix:
    """Binary item x user matrix with optional original-id maps for both axes."""

    matrix: sp.csr_matrix
    item_ids: list = field(default=None)
    user_ids: list = field(default=None)

    def __post_init__(self):
        M = sp.csr_matrix(self.matrix, dtype=np.float64)
        M.sum_duplicates()
        M.data[:] = 1.0
        M.eliminate_zeros()
        M.sort_indices()
        self.matrix = M
        if self.item_ids is not None and len(self.item_ids) != M.shape[0]:
            raise DimensionError("item_ids length does not match the item axis")
        if self.user_ids is not None and len(self.user_ids) != M.shape[1]:
            raise DimensionError("user_ids length does not match the user axis")

    @classmethod
    def from_coords(cls, items, users, shape, item_ids=None, user_ids=None):
        items = np.asarray(items, dtype=np.int64)
        users = np.asarray(users, dtype=np.int64)
        n, m = shape
        if items.size and (items.min() < 0 or items.max() >= n or users.min() < 0 or users.max() >= m):
            raise DimensionError(f"coordinates out of range for shape {shape}")
        data = np.ones(items.size)
        M = sp.coo_matrix((data, (items, users)), shape=(n, m)).tocsr()
        return cls(M, item_ids=item_ids, user_ids=user_ids)

    @classmethod
    def from_dense(cls, H):
        H = np.asarray(H)
        if H.ndim != 2:
            raise DimensionError("expected a 2-D array")
        items, users = np.nonzero(H)
        return cls.from_coords(items, users, H.shape)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def m(self):
        return self.matrix.shape[1]

    @property
    def nnz(self):
        return self.matrix.nnz

    def coords(self):
        """(items, users) of the stored ones, sorted by item then user."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order].astype(np.int64), coo.col[order].astype(np.int64)

    def toarray(self):
        return self.matrix.toarray()

    def gram(self):
        """Dense ``H @ H.T``."""
        return np.asarray((self.matrix @ self.matrix.T).todense())

    def select_users(self, users):
        users = np.asarray(users, dtype=np.int64)
        M = self.matrix.tocsc()[:, users].tocsr()
        user_ids = None if self.user_ids is None else [self.user_ids[u] for u in users]
        return InteractionMatrix(M, item_ids=self.item_ids, user_ids=user_ids)


@dataclass
class HoldoutSplit:
    X: InteractionMatrix
    Y: InteractionMatrix
    p: float
    seed: int


@dataclass
class GaussianDataModel:
    """``x ~ N(mu_x, Sigma_x)``, ``y = W_star x + e`` with ``e ~ N(0, Sigma_e)``."""

    mu_x: np.ndarray
    Sigma_x: np.ndarray
    W_star: np.ndarray
    Sigma_e: np.ndarray

    def __post_init__(self):
        self.mu_x = np.asarray(self.mu_x, dtype=float).reshape(-1)
        self.Sigma_x = np.atleast_2d(np.asarray(self.Sigma_x, dtype=float))
        self.W_star = np.atleast_2d(np.asarray(self.W_star, dtype=float))
        self.Sigma_e = np.atleast_2d(np.asarray(self.Sigma_e, dtype=float))
        n = self.mu_x.size
        p = self.W_star.shape[0]
        if self.Sigma_x.shape != (n, n):
            raise ArgumentError(f"Sigma_x must be {n}x{n}, got {self.Sigma_x.shape}")
        if self.W_star.shape != (p, n):
            raise ArgumentError(f"W_star must be {p}x{n}, got {self.W_star.shape}")
        if self.Sigma_e.shape != (p, p):
            raise ArgumentError(f"Sigma_e must be {p}x{p}, got {self.Sigma_e.shape}")

    @property
    def n(self):
        return self.mu_x.size

    @property
    def p(self):
        return self.W_star.shape[0]

    @property
    def second_moment(self):
        """``Sigma_x + mu_x mu_x^T``."""
        return self.Sigma_x + np.outer(self.mu_x, self.mu_x)


def _outcome_bits(n):
    codes = np.arange(2**n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(float)


@dataclass(frozen=True)
class BernoulliModel:
    """Distribution of a binary user vector ``h`` in ``{0,1}^n``.

    Enumeration mode stores one probability per outcome; outcome ``k`` has
    ``h_i = (k >> i) & 1``. Factorized mode stores independent marginals.
    """

    n: int
    probabilities: np.ndarray = None
    marginals: np.ndarray = None

    def __post_init__(self):
        if (self.probabilities is None) == (self.marginals is None):
            raise ArgumentError("give exactly one of probabilities or marginals")
        if self.probabilities is not None:
            if self.n > MAX_ENUMERATION_N:
                raise CapacityError(f"enumeration mode supports n <= {MAX_ENUMERATION_N}")
            probs = np.asarray(self.probabilities, dtype=float)
            if probs.shape != (2**self.n,):
                raise ArgumentError(f"expected {2**self.n} outcome probabilities")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise ArgumentError("outcome probabilities must be nonnegative and sum to 1")
            object.__setattr__(self, "probabilities", probs)
        else:
            q = np.asarray(self.marginals, dtype=float)
            if q.shape != (self.n,) or np.any(q < 0) or np.any(q > 1):
                raise ArgumentError("marginals must be n probabilities in [0, 1]")
            object.__setattr__(self, "marginals", q)

    @property
    def enumerated(self):
        return self.probabilities is not None

    @classmethod
    def from_table(cls, probabilities):
        probabilities = np.asarray(probabilities, dtype=float)
        n = int(round(math.log2(probabilities.size)))
        return cls(n=n, probabilities=probabilities)

    @classmethod
    def factorized(cls, q):
        q = np.asarray(q, dtype=float)
        return cls(n=q.size, marginals=q)

    @classmethod
    def point_mass(cls, h):
        h = np.asarray(h, dtype=int)
        probs = np.zeros(2 ** h.size)
        probs[int(np.sum(h << np.arange(h.size)))] = 1.0
        return cls(n=h.size, probabilities=probs)

    @classmethod
    def random(cls, n, rng, concentration=0.5):
        """Random enumeration-mode model with Dirichlet outcome weights."""
        probs = rng.dirichlet(np.full(2**n, concentration))
        probs /= probs.sum()
        return cls(n=n, probabilities=probs)

    def outcomes(self):
        if not self.enumerated:
            raise CapacityError("outcome table only exists in enumeration mode")
        return _outcome_bits(self.n)


# ---------------------------------------------------------------------------
# ingestion and persistence
# ---------------------------------------------------------------------------


def load_interactions(path, delimiter=",", skip_header=False, user_col=0, item_col=1,
                      min_user_interactions=0, min_item_interactions=0):
    """Read ``(user, item)`` records into an item x user matrix.

    Ids are re-indexed densely in order of first appearance and duplicates
    collapse to one interaction. The optional minimum-activity filters are
    applied once, items first, after de-duplication.
    """
    item_index, user_index = {}, {}
    pairs = set()
    items, users = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, record in enumerate(reader, start=1):
            if lineno == 1 and skip_header:
                continue
            if not record or all(not f.strip() for f in record):
                continue
            if len(record) <= max(user_col, item_col):
                raise ParseError(f"expected at least {max(user_col, item_col) + 1} fields, "
                                 f"got {len(record)}", line=lineno)
            user, item = record[user_col].strip(), record[item_col].strip()
            if not user or not item:
                raise ParseError("empty user or item id", line=lineno)
            i = item_index.setdefault(item, len(item_index))
            j = user_index.setdefault(user, len(user_index))
            if (i, j) not in pairs:
                pairs.add((i, j))
                items.append(i)
                users.append(j)
    if not pairs:
        raise EmptyDatasetError(f"no interactions in {path}")
    H = InteractionMatrix.from_coords(items, users, (len(item_index), len(user_index)),
                                      item_ids=list(item_index), user_ids=list(user_index))
    if min_item_interactions or min_user_interactions:
        H = filter_min_activity(H, min_user_interactions, min_item_interactions)
    return H


def filter_min_activity(H, min_user_interactions=0, min_item_interactions=0):
    M = H.matrix
    keep_items = np.flatnonzero(np.asarray(M.sum(axis=1)).ravel() >= min_item_interactions)
    M = M[keep_items]
    keep_users = np.flatnonzero(np.asarray(M.sum(axis=0)).ravel() >= min_user_interactions)
    M = M.tocsc()[:, keep_users].tocsr()
    if M.nnz == 0:
        raise EmptyDatasetError("activity filters removed every interaction")
    item_ids = None if H.item_ids is None else [H.item_ids[i] for i in keep_items]
    user_ids = None if H.user_ids is None else [H.user_ids[u] for u in keep_users]
    return InteractionMatrix(M, item_ids=item_ids, user_ids=user_ids)


def write_id_maps(H, path):
    with open(path, "w") as fh:
        json.dump({"items": H.item_ids, "users": H.user_ids}, fh, indent=1)


def write_coords(H, path):
    """Sparse exchange format: header ``n m`` then sorted ``i j`` lines."""
    items, users = H.coords()
    with open(path, "w") as fh:
        fh.write(f"{H.n} {H.m}\n")
        for i, j in zip(items.tolist(), users.tolist()):
            fh.write(f"{i} {j}\n")


def read_coords(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("expected shape header 'n m'", line=1)
        try:
            n, m = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError("shape header must hold two integers", line=1) from None
        items, users = [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError("expected 'i j'", line=lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError("coordinates must be integers", line=lineno) from None
            if not (0 <= i < n and 0 <= j < m):
                raise ParseError(f"coordinate ({i}, {j}) outside shape ({n}, {m})", line=lineno)
            items.append(i)
            users.append(j)
    return InteractionMatrix.from_coords(items, users, (n, m))


# ---------------------------------------------------------------------------
# splitting and masking
# ---------------------------------------------------------------------------


def strong_split(H_whole, test_fraction, seed):
    """Partition users into disjoint train/test sets; train gets ceil((1-f) m') users."""
    if not 0.0 < test_fraction < 1.0:
        raise ArgumentError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    m = H_whole.m
    n_train = math.ceil(round((1.0 - test_fraction) * m, 9))
    perm = np.random.default_rng(seed).permutation(m)
    train_users = np.sort(perm[:n_train])
    test_users = np.sort(perm[n_train:])
    return H_whole.select_users(train_users), H_whole.select_users(test_users)


_U64 = np.uint64


def _splitmix64(x):
    with np.errstate(over="ignore"):
        z = x + _U64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        return z ^ (z >> _U64(31))


def entry_uniforms(seed, items, users):
    """Counter-based uniforms in [0, 1): a pure function of (seed, item, user)."""
    key = _splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=_U64))
    h = _splitmix64(key ^ np.asarray(items, dtype=_U64))
    h = _splitmix64(h ^ np.asarray(users, dtype=_U64))
    return (h >> _U64(11)).astype(np.float64) * 2.0**-53


def holdout_mask(H, p, seed):
    """Keep each interaction in the input X with probability p; the rest go to the target Y."""
    if not 0.0 < p < 1.0:
        raise ArgumentError(f"p must lie in (0, 1), got {p}")
    items, users = H.coords()
    keep = entry_uniforms(seed, items, users) < p
    X = InteractionMatrix.from_coords(items[keep], users[keep], H.shape, H.item_ids, H.user_ids)
    Y = InteractionMatrix.from_coords(items[~keep], users[~keep], H.shape, H.item_ids, H.user_ids)
    return HoldoutSplit(X=X, Y=Y, p=p, seed=seed)


# ---------------------------------------------------------------------------
# correlations
# ---------------------------------------------------------------------------


def population_correlation(H_whole, warn_above=DENSE_WARN_N):
    """``H H^T / m'`` as a dense symmetric matrix."""
    if H_whole.m < 1:
        raise EmptyDatasetError("population has no users")
    if H_whole.n > warn_above:
        log.warning("allocating a dense %d x %d correlation matrix", H_whole.n, H_whole.n)
    G = H_whole.gram() / H_whole.m
    return 0.5 * (G + G.T)


def exact_correlation(model):
    """``E[h h^T]`` under a Bernoulli model."""
    if model.enumerated:
        O = model.outcomes()
        return O.T @ (model.probabilities[:, None] * O)
    q = model.marginals
    C = np.outer(q, q)
    np.fill_diagonal(C, q)
    return C


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def sample_regression(model, m, seed):
    """Draw m i.i.d. columns ``(x, y)``; returns X (n x m) and Y (p x m)."""
    if m < 1:
        raise ArgumentError("m must be at least 1")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((model.n, m))
    E = rng.standard_normal((model.p, m))
    X = model.mu_x[:, None] + numerics.psd_sqrt(model.Sigma_x) @ Z
    Y = model.W_star @ X + numerics.psd_sqrt(model.Sigma_e) @ E
    return X, Y


def sample_bernoulli(model, m, seed):
    if m < 1:
        raise ArgumentError("m must be at least 1")
    rng = np.random.default_rng(seed)
    if model.enumerated:
        codes = rng.choice(model.probabilities.size, size=m, p=model.probabilities)
        H = ((codes[None, :] >> np.arange(model.n)[:, None]) & 1).astype(bool)
    else:
        H = rng.random((model.n, m)) < model.marginals[:, None]
    return InteractionMatrix.from_dense(H)


def synthetic_interactions(n, m, seed, rank=4, density=0.08, noise=1.0):
    """Latent-factor implicit-feedback data with popularity skew.

    User j interacts with item i with probability ``sigmoid(a_i + <u_j, v_i> * noise^-1)``;
    the item offsets are chosen to give roughly the requested density. Items left
    without any interaction get one random user, so every item has positive popularity.
    """
    rng = np.random.default_rng(seed)
    popularity = np.sort(rng.gamma(0.8, 1.0, size=n))[::-1]
    offset = np.log(popularity / popularity.mean()) + math.log(density / (1 - density))
    V = rng.standard_normal((n, rank))
    U = rng.standard_normal((m, rank))
    logits = offset[:, None] + (V @ U.T) / noise
    probs = 1.0 / (1.0 + np.exp(-logits))
    H = rng.random((n, m)) < probs
    empty = np.flatnonzero(~H.any(axis=1))
    H[empty, rng.integers(0, m, size=empty.size)] = True
    return InteractionMatrix.from_dense(H)

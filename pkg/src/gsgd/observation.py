"""Observed entries, the sampling operator P_Omega, residuals and RMSE."""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import BadParameter, DimensionMismatch, EmptyComplement, NonFinite
from .linalg import as_matrix


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Entries ``(rows[k], cols[k]) -> values[k]`` of an ``m x n`` matrix.

    ``p`` is the nominal sampling probability used by the update rules.
    Entries are stored sorted row-major and must be unique.
    """

    m: int
    n: int
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    p: float = 1.0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        vals = np.asarray(self.values, dtype=float).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise DimensionMismatch("rows, cols and values must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.m or cols.min() < 0 or cols.max() >= self.n):
            raise BadParameter("observation index out of bounds")
        if not np.all(np.isfinite(vals)):
            raise NonFinite("observed values must be finite")
        if not (0 < self.p <= 1):
            raise BadParameter(f"p must lie in (0, 1], got {self.p}")
        key = rows * self.n + cols
        order = np.argsort(key, kind="stable")
        key = key[order]
        if np.any(np.diff(key) == 0):
            raise BadParameter("duplicate observation index")
        for name, arr in (("rows", rows[order]), ("cols", cols[order]), ("values", vals[order])):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        indptr = np.zeros(self.m + 1, dtype=np.int64)
        np.add.at(indptr, self.rows + 1, 1)
        indptr = np.cumsum(indptr)
        object.__setattr__(self, "_indptr", indptr)

    @classmethod
    def from_dense(cls, Y, mask, p=None):
        Y = as_matrix(Y)
        i, j = np.nonzero(mask)
        if p is None:
            p = max(len(i), 1) / Y.size
        return cls(Y.shape[0], Y.shape[1], i, j, Y[i, j], p)

    @property
    def shape(self):
        return (self.m, self.n)

    @property
    def size(self):
        return int(self.values.size)

    @property
    def empirical_p(self):
        return self.size / (self.m * self.n)

    def with_p(self, p):
        return ObservationSet(self.m, self.n, self.rows, self.cols, self.values, p)

    def subset(self, index, p=None):
        index = np.asarray(index)
        return ObservationSet(self.m, self.n, self.rows[index], self.cols[index], self.values[index],
                              self.p if p is None else p)

    def mask(self):
        M = np.zeros((self.m, self.n), dtype=bool)
        M[self.rows, self.cols] = True
        return M

    def dense(self, values=None):
        """Dense ``m x n`` matrix with ``values`` on Omega and zeros elsewhere."""
        Y = np.zeros((self.m, self.n))
        Y[self.rows, self.cols] = self.values if values is None else values
        return Y

    def sparse(self, values=None):
        """CSR matrix sharing the stored index structure."""
        vals = self.values if values is None else np.asarray(values, dtype=float)
        return sparse.csr_matrix((vals, self.cols, self._indptr), shape=(self.m, self.n))


def bernoulli_sample(X, p, sigma=0.0, seed=0):
    """Observe each entry of ``X`` independently with probability ``p``.

    Gaussian noise ``N(0, sigma^2)`` is added to the observed entries only.
    """
    X = as_matrix(X)
    if not (0 < p <= 1):
        raise BadParameter(f"p must lie in (0, 1], got {p}")
    if sigma < 0:
        raise BadParameter(f"sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    mask = rng.random(X.shape) < p
    i, j = np.nonzero(mask)
    vals = X[i, j]
    if sigma > 0:
        vals = vals + sigma * rng.standard_normal(vals.shape)
    return ObservationSet(X.shape[0], X.shape[1], i, j, vals, p)


def _check_factors(obs, F):
    W, H = F
    if W.shape[0] != obs.m or H.shape[0] != obs.n or W.shape[1] != H.shape[1]:
        raise DimensionMismatch(
            f"factors {W.shape}, {H.shape} incompatible with a {obs.m}x{obs.n} observation set")


def predict_entries(W, H, rows, cols):
    """``(W H^T)[rows, cols]`` without forming the product."""
    return np.einsum("ij,ij->i", W[rows], H[cols])


def masked_residual(obs, F):
    """Residual values ``(W H^T)_ij - Y_ij`` on Omega, aligned with ``obs.rows``/``obs.cols``.

    Entries off Omega are implicitly zero; use ``obs.sparse(res)`` or
    ``obs.dense(res)`` to materialise the residual matrix.
    """
    _check_factors(obs, F)
    return predict_entries(F[0], F[1], obs.rows, obs.cols) - obs.values


def loss(obs, F):
    """``1/(2p) * ||P_Omega(W H^T - Y)||_F^2``."""
    res = masked_residual(obs, F)
    return float(res @ res) / (2.0 * obs.p)


def rmse_on(obs, F):
    """RMSE of ``W H^T`` against the entries listed in ``obs`` (e.g. a holdout split)."""
    if obs.size == 0:
        raise EmptyComplement("no entries to evaluate")
    res = masked_residual(obs, F)
    return float(np.sqrt(res @ res / obs.size))


def rmse_complement(X_true, obs, F):
    """RMSE of ``W H^T`` against ``X_true`` over the unobserved positions."""
    X_true = as_matrix(X_true)
    if X_true.shape != obs.shape:
        raise DimensionMismatch(f"truth shape {X_true.shape} != {obs.shape}")
    _check_factors(obs, F)
    n_comp = obs.m * obs.n - obs.size
    if n_comp == 0:
        raise EmptyComplement("every entry is observed")
    D = F[0] @ F[1].T - X_true
    D[obs.rows, obs.cols] = 0.0
    return float(np.sqrt(np.sum(D * D) / n_comp))


def rmse_full(X_true, F):
    D = F[0] @ F[1].T - X_true
    return float(np.sqrt(np.mean(D * D)))


def split(obs, fraction, seed):
    """Randomly split ``obs`` into ``(train, held_out)`` with ``fraction`` held out."""
    if not (0 <= fraction < 1):
        raise BadParameter(f"fraction must lie in [0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    n_hold = int(round(fraction * obs.size))
    perm = rng.permutation(obs.size)
    hold = np.sort(perm[:n_hold])
    train = np.sort(perm[n_hold:])
    return obs.subset(train), obs.subset(hold)

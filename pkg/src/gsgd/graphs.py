"""Similarity graphs and the higher-order operators built from their Laplacians.

For a graph Laplacian ``Lt`` with eigendecomposition ``U diag(s) U^T``::

    A     = (I + lam * Lt)^{-1}          = U diag(1 / (1 + lam * s)) U^T
    L     = (1 + beta) I - beta * A      = U diag((1 + beta) - beta / (1 + lam * s)) U^T

and ``L^{1/2}``, ``L^{-1/2}`` are the matching diagonal transforms. One
eigendecomposition per graph serves every operator.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BadK, BadParameter, DimensionMismatch, GraphTooDense
from .linalg import SymEigen, as_matrix, sym_eigen

OPERATOR_KINDS = ("A", "L", "Lhalf", "Linvhalf")


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    """Weighted undirected graph on vertices ``0..n-1``.

    ``edges`` is an ``(e, 3)`` float array of ``(i, j, w)`` rows with
    ``i < j`` and ``w > 0``, sorted lexicographically by ``(i, j)``.
    """

    n: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        E = np.asarray(self.edges, dtype=float).reshape(-1, 3)
        if E.shape[0]:
            i, j, w = E[:, 0], E[:, 1], E[:, 2]
            if np.any(i != np.round(i)) or np.any(j != np.round(j)):
                raise BadParameter("vertex ids must be integers")
            if np.any(i < 0) or np.any(j >= self.n):
                raise BadParameter("vertex id out of range")
            if np.any(i >= j):
                raise BadParameter("edges must satisfy i < j (no self-loops)")
            if np.any(~np.isfinite(w)) or np.any(w <= 0):
                raise BadParameter("edge weights must be positive and finite")
            order = np.lexsort((j, i))
            E = E[order]
            key = E[:, 0] * self.n + E[:, 1]
            if np.any(np.diff(key) == 0):
                raise BadParameter("duplicate edge")
        E.setflags(write=False)
        object.__setattr__(self, "edges", E)

    @classmethod
    def from_pairs(cls, n, pairs, weights=None):
        pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        w = np.ones(len(pairs)) if weights is None else np.asarray(weights, dtype=float)
        return cls(n, np.column_stack([lo, hi, w]))

    @classmethod
    def from_adjacency(cls, W):
        W = as_matrix(W, "adjacency")
        if W.shape[0] != W.shape[1] or not np.allclose(W, W.T):
            raise BadParameter("adjacency must be square and symmetric")
        i, j = np.nonzero(np.triu(W, k=1))
        return cls(W.shape[0], np.column_stack([i, j, W[i, j]]))

    @property
    def num_edges(self):
        return self.edges.shape[0]

    def pair_set(self):
        return {(int(a), int(b)) for a, b in self.edges[:, :2]}

    def adjacency(self):
        W = np.zeros((self.n, self.n))
        if self.num_edges:
            i = self.edges[:, 0].astype(int)
            j = self.edges[:, 1].astype(int)
            W[i, j] = self.edges[:, 2]
            W[j, i] = self.edges[:, 2]
        return W

    @cached_property
    def laplacian(self):
        W = self.adjacency()
        Lt = np.diag(W.sum(axis=1)) - W
        Lt.setflags(write=False)
        return Lt

    def degrees(self):
        return (self.adjacency() > 0).sum(axis=1)

    def is_connected(self):
        if self.n <= 1:
            return True
        nbrs = [[] for _ in range(self.n)]
        for a, b in self.edges[:, :2].astype(int):
            nbrs[a].append(b)
            nbrs[b].append(a)
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            for u in nbrs[v]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(u)
        return bool(seen.all())

    @classmethod
    def empty(cls, n):
        return cls(n, np.zeros((0, 3)))

    @classmethod
    def path(cls, n):
        idx = np.arange(n - 1)
        return cls.from_pairs(n, np.column_stack([idx, idx + 1]))


class GraphOperator:
    """Spectral functions of one graph Laplacian for fixed ``beta`` and ``lam``.

    Immutable after construction. ``apply(which, M)`` multiplies ``M`` on the
    left by ``A``, ``L``, ``L^{1/2}`` or ``L^{-1/2}``.
    """

    def __init__(self, eig, beta, lam):
        if beta < 0 or lam < 0 or not np.isfinite(beta) or not np.isfinite(lam):
            raise BadParameter(f"beta and lambda must be >= 0, got {beta}, {lam}")
        self.eig = eig
        self.beta = float(beta)
        self.lam = float(lam)
        s = np.maximum(eig.eigenvalues, 0.0)
        fA = 1.0 / (1.0 + self.lam * s)
        fL = (1.0 + self.beta) - self.beta * fA
        self._diag = {
            "A": fA,
            "L": fL,
            "Lhalf": np.sqrt(fL),
            "Linvhalf": 1.0 / np.sqrt(fL),
        }
        for d in self._diag.values():
            d.setflags(write=False)
        # An identity operator is exactly the identity, not U I U^T.
        self._identity = {
            "A": self.lam == 0.0,
            "L": self.beta == 0.0 or self.lam == 0.0,
            "Lhalf": self.beta == 0.0 or self.lam == 0.0,
            "Linvhalf": self.beta == 0.0 or self.lam == 0.0,
        }

    @property
    def n(self):
        return self.eig.n

    def spectrum(self, which):
        return self._diag[which]

    def is_identity(self, which):
        return self._identity[which]

    def apply(self, which, M):
        if which not in self._diag:
            raise ValueError(f"unknown operator {which!r}; expected one of {OPERATOR_KINDS}")
        M = np.asarray(M, dtype=float)
        vec = M.ndim == 1
        if vec:
            M = M[:, None]
        if M.shape[0] != self.n:
            raise DimensionMismatch(f"operator is {self.n}x{self.n}, argument has {M.shape[0]} rows")
        if self._identity[which]:
            out = M.copy()
        else:
            U = self.eig.eigenvectors
            out = U @ (self._diag[which][:, None] * (U.T @ M))
        return out[:, 0] if vec else out

    def dense(self, which):
        if self._identity[which]:
            return np.eye(self.n)
        U = self.eig.eigenvectors
        D = (U * self._diag[which]) @ U.T
        return 0.5 * (D + D.T)

    def higher_order_adjacency(self):
        return higher_order_adjacency(self)


def identity_operator(n):
    """Operator for an edgeless graph: every spectral function is ``I``."""
    return GraphOperator(SymEigen(np.zeros(n), np.eye(n)), 0.0, 0.0)


def build_operator(G, beta, lam):
    """Eigendecompose ``G``'s Laplacian and wrap it as a ``GraphOperator``."""
    if beta < 0 or lam < 0:
        raise BadParameter(f"beta and lambda must be >= 0, got {beta}, {lam}")
    Lt = G.laplacian if isinstance(G, SimilarityGraph) else as_matrix(G, "laplacian")
    return GraphOperator(sym_eigen(Lt), beta, lam)


def higher_order_adjacency(op):
    """``E_ij = |(I - A)_ij|`` off the diagonal, zero on it."""
    IA = np.eye(op.n) - op.dense("A")
    E = np.abs(IA)
    np.fill_diagonal(E, 0.0)
    return 0.5 * (E + E.T)


def _pairwise_sq_dists(X, rows):
    D = X[rows, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", D, D)


def knn_graph(features, k):
    """Binary k-nearest-neighbour graph with union symmetrisation.

    Distances are Euclidean; ties are broken by the lower vertex index.
    """
    X = as_matrix(features, "features")
    n = X.shape[0]
    k = int(k)
    if k < 1 or k >= n:
        raise BadK(f"k must satisfy 1 <= k < n={n}, got {k}")
    chunk = max(1, int(2e7 // max(1, n * X.shape[1])))
    pairs = []
    for start in range(0, n, chunk):
        rows = np.arange(start, min(n, start + chunk))
        D = _pairwise_sq_dists(X, rows)
        D[np.arange(len(rows)), rows] = np.inf
        nn = np.argsort(D, axis=1, kind="stable")[:, :k]
        pairs.append(np.column_stack([np.repeat(rows, k), nn.ravel()]))
    P = np.vstack(pairs)
    lo = np.minimum(P[:, 0], P[:, 1])
    hi = np.maximum(P[:, 0], P[:, 1])
    uniq = np.unique(lo * n + hi)
    return SimilarityGraph.from_pairs(n, np.column_stack([uniq // n, uniq % n]))


def perturb_edges(G, proportion, seed):
    """Delete ``floor(proportion * |E|)`` random edges and add as many random non-edges.

    Added edges have weight 1 and are drawn from pairs absent in ``G``; the
    edge count is preserved.
    """
    if not 0 <= proportion <= 1:
        raise BadParameter(f"proportion must lie in [0, 1], got {proportion}")
    rng = np.random.default_rng(seed)
    e = G.num_edges
    k = int(np.floor(proportion * e + 1e-12))
    if k == 0:
        return G
    n = G.n
    existing = set((G.edges[:, 0].astype(np.int64) * n + G.edges[:, 1].astype(np.int64)).tolist())
    n_absent = n * (n - 1) // 2 - e
    if n_absent < k:
        raise GraphTooDense(f"need {k} absent pairs, only {n_absent} exist")

    drop = rng.choice(e, size=k, replace=False)
    keep = np.ones(e, dtype=bool)
    keep[drop] = False

    if 4 * k >= n_absent:
        iu, ju = np.triu_indices(n, k=1)
        keys = iu.astype(np.int64) * n + ju
        mask = ~np.isin(keys, np.fromiter(existing, dtype=np.int64, count=len(existing)))
        cand = keys[mask]
        added = cand[rng.choice(len(cand), size=k, replace=False)]
    else:
        chosen = []
        taken = set()
        while len(chosen) < k:
            a, b = rng.integers(0, n, size=2)
            if a == b:
                continue
            key = int(min(a, b)) * n + int(max(a, b))
            if key in existing or key in taken:
                continue
            taken.add(key)
            chosen.append(key)
        added = np.array(chosen, dtype=np.int64)

    new = np.column_stack([added // n, added % n, np.ones(k)])
    return SimilarityGraph(n, np.vstack([G.edges[keep], new]))

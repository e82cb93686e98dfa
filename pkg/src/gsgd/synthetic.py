"""Random similarity graphs and graph-smooth low-rank ground truth.

The truth is ``X = A Z B^T`` with ``Z = U V^T`` Gaussian of rank ``r`` and
``A = U_W g(S_W)``, ``B = U_H g(S_H)`` built from the Laplacian
eigendecompositions ``Lt = U_W S_W U_W^T``. The filter is the Tikhonov
low-pass ``g(s) = 1 / (1 + filter_scale * s)``. ``X`` is rescaled so that
``||X||_F / sqrt(m n) = 1``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BadParameter, DimensionMismatch, DisconnectedAfterRetries
from .graphs import SimilarityGraph, knn_graph
from .linalg import sym_eigen

GRAPH_KINDS = ("knn_uniform_points", "community")
MAX_GRAPH_RETRIES = 20


@dataclass
class SynthConfig:
    m: int = 200
    n: int = 200
    r: int = 5
    graph_kind: str = "knn_uniform_points"
    graph_params: dict = field(default_factory=dict)
    filter: str = "tikhonov"
    filter_scale: float = 1.0
    identity_filter: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.r < 1 or self.r > min(self.m, self.n):
            raise BadParameter(f"rank {self.r} outside [1, min(m, n)]")
        if self.graph_kind not in GRAPH_KINDS:
            raise BadParameter(f"unknown graph kind {self.graph_kind!r}")
        if self.filter != "tikhonov":
            raise BadParameter(f"unknown filter {self.filter!r}")
        if not self.filter_scale > 0:
            raise BadParameter("filter_scale must be positive")


def _knn_points(n, params, rng):
    k = int(params.get("k", 10))
    pts = rng.random((n, 2))
    return knn_graph(pts, min(k, n - 1))


def _community(n, params, rng):
    c = int(params.get("communities", 2))
    p_in = float(params.get("intra", 0.5))
    p_out = float(params.get("inter", 0.01))
    if c < 1 or c > n or not (0 <= p_out <= 1 and 0 <= p_in <= 1):
        raise BadParameter("community graph needs 1 <= communities <= n and probabilities in [0, 1]")
    labels = community_labels(n, c)
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_in, p_out)
    keep = rng.random(iu.shape) < prob
    return SimilarityGraph.from_pairs(n, np.column_stack([iu[keep], ju[keep]]))


def community_labels(n, communities):
    """Balanced contiguous block labels ``0..communities-1``."""
    return np.repeat(np.arange(communities), [n // communities + (i < n % communities) for i in range(communities)])


def generate_graph(kind, params, n, seed):
    """Random connected graph of the given kind; deterministic per seed.

    Disconnected draws are retried with fresh sub-seeds up to
    ``MAX_GRAPH_RETRIES`` times.
    """
    if kind not in GRAPH_KINDS:
        raise BadParameter(f"unknown graph kind {kind!r}")
    params = params or {}
    ss = np.random.SeedSequence(seed)
    for child in ss.spawn(MAX_GRAPH_RETRIES):
        rng = np.random.default_rng(child)
        G = _knn_points(n, params, rng) if kind == "knn_uniform_points" else _community(n, params, rng)
        if G.is_connected():
            return G
    raise DisconnectedAfterRetries(f"{kind} graph on {n} vertices disconnected after {MAX_GRAPH_RETRIES} draws")


def smoothing_factor(G, filter_scale=1.0, identity=False):
    """``U g(S)`` for the Laplacian of ``G``."""
    eig = sym_eigen(G.laplacian)
    if identity:
        return np.eye(G.n)
    g = 1.0 / (1.0 + filter_scale * np.maximum(eig.eigenvalues, 0.0))
    return eig.eigenvectors * g


def generate_smooth_truth(cfg, G1, G2, return_parts=False):
    """Rank-``r`` matrix smooth on ``G1`` (rows) and ``G2`` (columns)."""
    if G1.n != cfg.m or G2.n != cfg.n:
        raise DimensionMismatch(f"graphs ({G1.n}, {G2.n}) do not match ({cfg.m}, {cfg.n})")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    U = rng.standard_normal((cfg.m, cfg.r))
    V = rng.standard_normal((cfg.n, cfg.r))
    A = smoothing_factor(G1, cfg.filter_scale, cfg.identity_filter)
    B = smoothing_factor(G2, cfg.filter_scale, cfg.identity_filter)
    X = (A @ U) @ (B @ V).T
    X *= np.sqrt(cfg.m * cfg.n) / np.linalg.norm(X)
    if return_parts:
        Z = U @ V.T
        return X, Z * np.sqrt(cfg.m * cfg.n) / np.linalg.norm(Z)
    return X


@dataclass
class Instance:
    """A complete synthetic problem: graphs and ground truth."""

    cfg: SynthConfig
    G1: SimilarityGraph
    G2: SimilarityGraph
    X: np.ndarray


def make_instance(cfg):
    """Graphs and truth from one config; graph seeds are derived from ``cfg.seed``."""
    s1, s2 = np.random.SeedSequence([cfg.seed, 2]).generate_state(2)
    G1 = generate_graph(cfg.graph_kind, cfg.graph_params, cfg.m, int(s1))
    G2 = generate_graph(cfg.graph_kind, cfg.graph_params, cfg.n, int(s2))
    return Instance(cfg, G1, G2, generate_smooth_truth(cfg, G1, G2))

"""Spectral initialisation and the graph-incoherence projection."""

from dataclasses import dataclass

import numpy as np

from .errors import BadParameter, BadRadius, DimensionMismatch, RankOutOfRange
from .factors import FactorPair
from .linalg import top_r_svd


@dataclass(frozen=True)
class ProjectionConfig:
    """Projection settings for the solver.

    ``radius`` is either a positive number, ``"auto"`` (estimated from the
    initial factors) or ``None`` to disable the projection.
    """

    radius: object = None
    c_B: float = 1.5
    scaling: str = "exact"

    def __post_init__(self):
        if self.radius not in (None, "auto"):
            if not float(self.radius) > 0:
                raise BadRadius(f"projection radius must be positive, got {self.radius}")
        if self.scaling not in PROJECTION_SCALINGS:
            raise BadParameter(f"unknown projection scaling {self.scaling!r}")

    @property
    def enabled(self):
        return self.radius is not None


PROJECTION_SCALINGS = ("exact", "graph")


def _split_factors(U, S, V):
    root = np.sqrt(S)
    return FactorPair(U * root, V * root)


def standard_spectral_init(obs, r, seed=0):
    """Top-r SVD of ``Y / p`` split as ``(U S^{1/2}, V S^{1/2})``."""
    if r < 1 or r > min(obs.m, obs.n):
        raise RankOutOfRange(f"rank {r} outside [1, {min(obs.m, obs.n)}]")
    svd = top_r_svd(obs.dense() / obs.p, r, seed)
    return _split_factors(*svd)


def graph_spectral_init(obs, opW, opH, r, seed=0, return_svd=False):
    """Top-r SVD of ``A Y B / p`` split as ``(U S^{1/2}, V S^{1/2})``.

    ``A`` and ``B`` are the ``(I + lam Lt)^{-1}`` operators of the row and
    column graphs. With ``lam = 0`` this reproduces the standard spectral
    initialisation exactly.
    """
    if opW.n != obs.m or opH.n != obs.n:
        raise DimensionMismatch(f"operators ({opW.n}, {opH.n}) do not match data {obs.shape}")
    if r < 1 or r > min(obs.m, obs.n):
        raise RankOutOfRange(f"rank {r} outside [1, {min(obs.m, obs.n)}]")
    AY = opW.apply("A", obs.dense())
    AYB = opH.apply("A", AY.T).T
    svd = top_r_svd(AYB / obs.p, r, seed)
    F = _split_factors(*svd)
    return (F, svd) if return_svd else F


def _row_scales(M, G, radius, dim):
    # ||M_i G^{1/2}||_2 = sqrt(M_i G M_i^T)
    norms = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", M, G, M), 0.0))
    scale = np.ones_like(norms)
    big = np.sqrt(dim) * norms > radius
    scale[big] = radius / (np.sqrt(dim) * norms[big])
    return scale


def project_B(F_tilde, opW, opH, B, scaling="exact"):
    """Closed-form projection onto the weighted graph-incoherence set.

    Rows of ``Wc = L_W^{1/2} W~`` and ``Hc = L_H^{1/2} H~`` are shrunk
    so that ``sqrt(m) * ||Wc_i G_H^{1/2}|| <= B`` and
    ``sqrt(n) * ||Hc_j G_W^{1/2}|| <= B``, then mapped back through
    ``L^{-1/2}``. Both families of scale factors come from the unprojected
    factors.

    ``scaling="exact"`` uses ``G_H = H~^T H~`` (and ``G_W = W~^T W~``), which
    is the exact minimiser of the weighted least-squares projection problem.
    ``scaling="graph"`` uses ``G_H = Hc^T Hc``, i.e. row norms of
    ``Wc_i Hc^T``; this shrinks at least as much and additionally bounds
    ``sqrt(m) * ||L_W^{1/2} W H^T||_{2,inf}`` for the projected pair.
    The two coincide when ``beta = 0``.
    """
    if not (B is not None and np.isfinite(B) and B > 0):
        raise BadRadius(f"projection radius must be positive, got {B}")
    if scaling not in PROJECTION_SCALINGS:
        raise BadParameter(f"unknown projection scaling {scaling!r}")
    Wt, Ht = F_tilde
    m, n = Wt.shape[0], Ht.shape[0]
    Wc = opW.apply("Lhalf", Wt)
    Hc = opH.apply("Lhalf", Ht)
    if scaling == "exact":
        GH, GW = Ht.T @ Ht, Wt.T @ Wt
    else:
        GH, GW = Hc.T @ Hc, Wc.T @ Wc
    sW = _row_scales(Wc, GH, B, m)
    sH = _row_scales(Hc, GW, B, n)
    W = Wt.copy() if np.all(sW == 1.0) else opW.apply("Linvhalf", Wc * sW[:, None])
    H = Ht.copy() if np.all(sH == 1.0) else opH.apply("Linvhalf", Hc * sH[:, None])
    return FactorPair(W, H)


def projection_objective(F, F_tilde, opW, opH):
    """Weighted distance minimised by the projection."""
    W, H = F
    Wt, Ht = F_tilde
    DW = opW.apply("Lhalf", W - Wt)
    DH = opH.apply("Lhalf", H - Ht)
    return float(np.einsum("ij,jk,ik->", DW, Ht.T @ Ht, DW) + np.einsum("ij,jk,ik->", DH, Wt.T @ Wt, DH))


def projection_constraints(F, F_tilde, opW, opH):
    """Left-hand sides of the two projection constraints, evaluated at ``F``."""
    W, H = F
    Wt, Ht = F_tilde
    Wc = opW.apply("Lhalf", W)
    Hc = opH.apply("Lhalf", H)
    cw = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", Wc, Ht.T @ Ht, Wc), 0.0))
    ch = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", Hc, Wt.T @ Wt, Hc), 0.0))
    return np.sqrt(W.shape[0]) * cw.max(), np.sqrt(H.shape[0]) * ch.max()


def joint_incoherence(F, opW, opH):
    """``(sqrt(m) ||L_W^{1/2} W H^T||_{2,inf}, sqrt(n) ||L_H^{1/2} H W^T||_{2,inf})``."""
    W, H = F
    Wc = opW.apply("Lhalf", W)
    Hc = opH.apply("Lhalf", H)
    a = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", Wc, H.T @ H, Wc), 0.0)).max()
    b = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", Hc, W.T @ W, Hc), 0.0)).max()
    return float(np.sqrt(W.shape[0]) * a), float(np.sqrt(H.shape[0]) * b)


def incoherent_radius(sigma1_est, mu_est, r, beta, c_B):
    """``c_B * sqrt(mu * r * (1 + beta)) * sigma_1``."""
    if not (sigma1_est > 0 and mu_est > 0 and r > 0 and c_B > 0 and beta >= 0):
        raise BadParameter("incoherent_radius needs positive sigma1, mu, r, c_B and beta >= 0")
    return float(c_B * np.sqrt(mu_est * r * (1.0 + beta)) * sigma1_est)

"""Factored gradient solvers for matrix completion with graph side information.

Four update rules share one run loop:

* ``gd``        plain gradient descent on ``1/(2p) ||P_Omega(W H^T - Y)||_F^2``
* ``scaledgd``  the same gradient right-preconditioned by ``(H^T H)^{-1}``, ``(W^T W)^{-1}``
* ``glgd``      gradient descent on the Laplacian-regularised objective
                ``loss + beta/2 (tr(W^T Lt_W W) + tr(H^T Lt_H H))``
* ``gsgd``      the ScaledGD direction left-multiplied by the higher-order
                operators ``L_W``, ``L_H``
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import BadParameter, DimensionMismatch, MissingGraph, NonFinite, NotPositiveDefinite, RankCollapse
from .factors import FactorPair
from .graphs import build_operator, identity_operator
from .initialization import (
    ProjectionConfig,
    graph_spectral_init,
    incoherent_radius,
    project_B,
    standard_spectral_init,
)
from .linalg import l2inf_norm, spd_solve, spectral_norm
from .observation import ObservationSet, masked_residual, rmse_complement, rmse_on

logger = logging.getLogger(__name__)

METHODS = ("gd", "scaledgd", "glgd", "gsgd")
GRAPH_METHODS = ("glgd", "gsgd")
UNSCALED_METHODS = ("gd", "glgd")
# Default step sizes. For gd and glgd the value is relative: the step used is
# eta / sigma_1 with sigma_1 the leading singular value of the initial iterate.
DEFAULT_ETA = {"gd": 0.25, "glgd": 0.25, "scaledgd": 0.5}
PLATEAU_WINDOW = 10


def gsgd_step_bound(beta):
    """Largest step size covered by the linear-convergence guarantee."""
    return 2.0 / (2.0 * (1.0 + beta) + math.sqrt(1.0 + beta))


def _residual_products(F, obs):
    W, H = F
    R = obs.sparse(masked_residual(obs, F))
    return R @ H, R.T @ W


def _precondition(D, G):
    # D G^{-1} with G symmetric positive definite
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(G))):
        raise NonFinite("non-finite gradient or Gram matrix")
    try:
        return spd_solve(G, D.T).T
    except NotPositiveDefinite as exc:
        raise RankCollapse(f"Gram preconditioner is singular: {exc}") from exc


def gd_step(F, obs, eta):
    """``W - (eta/p) R H``, ``H - (eta/p) R^T W`` with ``R = P_Omega(W H^T - Y)``."""
    W, H = F
    RH, RtW = _residual_products(F, obs)
    gW = (1.0 / obs.p) * RH
    gH = (1.0 / obs.p) * RtW
    return FactorPair(W - eta * gW, H - eta * gH)


def glgd_step(F, obs, eta, beta, LtW, LtH):
    """Gradient step on the Laplacian-regularised loss; equals ``gd_step`` when ``beta = 0``."""
    W, H = F
    if LtW.shape != (W.shape[0], W.shape[0]) or LtH.shape != (H.shape[0], H.shape[0]):
        raise DimensionMismatch("Laplacian shapes do not match the factors")
    RH, RtW = _residual_products(F, obs)
    gW = (1.0 / obs.p) * RH
    gH = (1.0 / obs.p) * RtW
    if beta != 0:
        gW = gW + beta * (LtW @ W)
        gH = gH + beta * (LtH @ H)
    return FactorPair(W - eta * gW, H - eta * gH)


def scaledgd_step(F, obs, eta):
    """Preconditioned step; both Gram matrices come from the pre-update factors."""
    return gsgd_step(F, obs, eta, None, None)


def gsgd_step(F, obs, eta, opW, opH):
    """``W - (eta/p) L_W R H (H^T H)^{-1}``, ``H - (eta/p) L_H R^T W (W^T W)^{-1}``.

    With ``opW = opH = None`` (or operators equal to the identity) this is
    exactly ``scaledgd_step``.
    """
    W, H = F
    if opW is not None and (opW.n != W.shape[0] or opH.n != H.shape[0]):
        raise DimensionMismatch("operators do not match the factor shapes")
    RH, RtW = _residual_products(F, obs)
    dW = _precondition(RH, H.T @ H)
    dH = _precondition(RtW, W.T @ W)
    if opW is not None:
        dW = opW.apply("L", dW)
        dH = opH.apply("L", dH)
    step = eta / obs.p
    return FactorPair(W - step * dW, H - step * dH)


@dataclass
class SolverConfig:
    method: str = "gsgd"
    eta: Optional[float] = None
    beta: float = 1.0
    lam: float = 1.0
    max_iters: int = 500
    target_rmse: Optional[float] = None
    rel_change_tol: float = 1e-6
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    init: str = "graph"
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise BadParameter(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.init not in ("standard", "graph"):
            raise BadParameter(f"unknown init {self.init!r}")
        if self.eta is not None and not self.eta > 0:
            raise BadParameter(f"eta must be positive, got {self.eta}")
        if self.beta < 0 or self.lam < 0:
            raise BadParameter("beta and lambda must be >= 0")
        if int(self.max_iters) < 1:
            raise BadParameter("max_iters must be >= 1")
        if self.rel_change_tol < 0:
            raise BadParameter("rel_change_tol must be >= 0")

    @property
    def step_size(self):
        if self.eta is not None:
            return float(self.eta)
        if self.method == "gsgd":
            return gsgd_step_bound(self.beta)
        return DEFAULT_ETA[self.method]

    def needs_graphs(self):
        return self.method in GRAPH_METHODS or self.init == "graph"


@dataclass
class IterRecord:
    iter: int
    train_rmse: float
    test_rmse: float
    wall_ms: float


@dataclass
class SolverTrace:
    records: List[IterRecord]
    factors: FactorPair
    reason: str
    initial_train_rmse: float = float("nan")
    initial_test_rmse: float = float("nan")
    radius: Optional[float] = None
    init_sigma: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.records)

    @property
    def test_rmse(self):
        return np.array([r.test_rmse for r in self.records])

    @property
    def train_rmse(self):
        return np.array([r.train_rmse for r in self.records])

    @property
    def final_test_rmse(self):
        return self.records[-1].test_rmse if self.records else self.initial_test_rmse

    def iterations_to(self, threshold):
        """First iteration whose test RMSE is <= ``threshold`` (``None`` if never)."""
        for rec in self.records:
            if rec.test_rmse <= threshold:
                return rec.iter
        return None


class SolverFailure(Exception):
    """Wraps a numerical failure together with the partial trace."""

    def __init__(self, cause, trace):
        super().__init__(str(cause))
        self.cause = cause
        self.trace = trace


def _measured_mu(F0, opW, opH):
    # graph incoherence of the column spaces of the initial factors
    W, H = F0
    m, n, r = W.shape[0], H.shape[0], W.shape[1]
    U, _ = np.linalg.qr(W)
    V, _ = np.linalg.qr(H)
    mu_w = m / r * l2inf_norm(opW.apply("Lhalf", U)) ** 2
    mu_h = n / r * l2inf_norm(opH.apply("Lhalf", V)) ** 2
    return max(mu_w, mu_h)


def run(config, obs, rank, graphs=None, truth=None, operators=None, initial=None):
    """Run one solver and record a per-iteration trace.

    Parameters
    ----------
    config : SolverConfig
    obs : ObservationSet
        Training observations.
    rank : int
        Target rank ``r``; ignored when ``initial`` is given.
    graphs : (SimilarityGraph, SimilarityGraph), optional
        Row and column graphs; required for ``glgd``, ``gsgd`` and graph init.
    truth : ndarray or ObservationSet, optional
        Full ground truth (RMSE over the unobserved complement) or a
        held-out entry list (RMSE over those entries).
    operators : (GraphOperator, GraphOperator), optional
        Prebuilt operators matching ``config.beta``/``config.lam``; skips
        the eigendecompositions.
    initial : FactorPair, optional
        Overrides spectral initialisation.

    Stops after ``max_iters``, once the test RMSE (train RMSE when no truth is
    given) reaches ``target_rmse``, or when the relative change of the train
    RMSE stays below ``rel_change_tol`` for ``PLATEAU_WINDOW`` consecutive
    iterations.
    """
    cfg = config
    m, n = obs.shape
    if cfg.needs_graphs() and graphs is None and operators is None:
        raise MissingGraph(f"method={cfg.method}, init={cfg.init} requires row and column graphs")

    opW = opH = None
    LtW = LtH = None
    if operators is not None:
        opW, opH = operators
    elif graphs is not None and (cfg.method == "gsgd" or cfg.init == "graph" or cfg.projection.enabled):
        opW = build_operator(graphs[0], cfg.beta, cfg.lam)
        opH = build_operator(graphs[1], cfg.beta, cfg.lam)
    if opW is not None and (opW.n != m or opH.n != n):
        raise DimensionMismatch(f"graphs ({opW.n}, {opH.n}) do not match data {obs.shape}")
    if cfg.method == "glgd":
        LtW = np.asarray(graphs[0].laplacian)
        LtH = np.asarray(graphs[1].laplacian)

    if isinstance(truth, ObservationSet):
        def test_metric(F):
            return rmse_on(truth, F)
    elif truth is not None:
        truth = np.asarray(truth, dtype=float)

        def test_metric(F):
            return rmse_complement(truth, obs, F)
    else:
        def test_metric(F):
            return float("nan")

    r = initial[0].shape[1] if initial is not None else int(rank)
    init_sigma = None
    if initial is not None:
        F = FactorPair(np.array(initial[0], dtype=float), np.array(initial[1], dtype=float))
    elif cfg.init == "graph":
        F, svd = graph_spectral_init(obs, opW, opH, r, cfg.seed, return_svd=True)
        init_sigma = svd.S
    else:
        F = standard_spectral_init(obs, r, cfg.seed)
        init_sigma = np.sum(F.W * F.W, axis=0)

    proj_ops = (opW, opH) if opW is not None else (identity_operator(m), identity_operator(n))
    radius = None
    if cfg.projection.enabled:
        if cfg.projection.radius == "auto":
            # ||Y/p|| estimates sigma_1(X); the graph-filtered spectrum of A Y B / p underestimates it
            sigma1 = spectral_norm(obs.dense() / obs.p)
            mu = _measured_mu(F, *proj_ops)
            beta = cfg.beta if cfg.method == "gsgd" else 0.0
            radius = incoherent_radius(sigma1, mu, r, beta, cfg.projection.c_B)
        else:
            radius = float(cfg.projection.radius)
        F = project_B(F, *proj_ops, radius, scaling=cfg.projection.scaling)

    eta = cfg.step_size
    if cfg.method in UNSCALED_METHODS:
        # relative step: unpreconditioned gradients scale with sigma_1
        sigma1 = float(init_sigma[0]) if init_sigma is not None else float(np.linalg.norm(F.product(), 2))
        eta = eta / max(sigma1, np.finfo(float).tiny)
    step_ops = (opW, opH) if cfg.method == "gsgd" else (None, None)
    records = []
    trace = SolverTrace(records, F, "max_iters", rmse_on(obs, F), test_metric(F), radius, init_sigma)
    use_test = truth is not None
    prev_train = trace.initial_train_rmse
    flat = 0
    t0 = time.perf_counter()
    for it in range(1, int(cfg.max_iters) + 1):
        try:
            if cfg.method == "gd":
                F = gd_step(F, obs, eta)
            elif cfg.method == "glgd":
                F = glgd_step(F, obs, eta, cfg.beta, LtW, LtH)
            else:
                F = gsgd_step(F, obs, eta, *step_ops)
            if radius is not None:
                F = project_B(F, *proj_ops, radius, scaling=cfg.projection.scaling)
            if not F.is_finite():
                raise NonFinite(f"iterate diverged at iteration {it}")
        except (NotPositiveDefinite, NonFinite) as exc:
            trace.reason = "error"
            logger.warning("%s aborted at iteration %d: %s", cfg.method, it, exc)
            raise SolverFailure(exc, trace) from exc

        with np.errstate(over="ignore", invalid="ignore"):
            train = rmse_on(obs, F)
            test = test_metric(F)
        records.append(IterRecord(it, train, test, 1000.0 * (time.perf_counter() - t0)))
        trace.factors = F

        if cfg.target_rmse is not None and (test if use_test else train) <= cfg.target_rmse:
            trace.reason = "target"
            break
        if prev_train > 0 and abs(prev_train - train) <= cfg.rel_change_tol * prev_train:
            flat += 1
        else:
            flat = 0
        prev_train = train
        if flat >= PLATEAU_WINDOW:
            trace.reason = "plateau"
            break
    return trace


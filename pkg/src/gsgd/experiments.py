"""Synthetic problems, the solver bake-off and the two-row toy problem.

Seeds: everything random in one synthetic problem is derived from a single
integer ``seed`` through ``numpy.random.SeedSequence([seed, tag])`` with a
fixed tag per purpose, so methods compared on the same seed see the same
graphs, truth, observation set and validation split.
"""

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .diagnostics import psi_smoothness
from .errors import BadParameter
from .factors import FactorPair
from .graphs import SimilarityGraph, build_operator, perturb_edges
from .observation import ObservationSet, bernoulli_sample, split
from .solvers import (
    DEFAULT_ETA,
    GRAPH_METHODS,
    METHODS,
    SolverConfig,
    SolverFailure,
    glgd_step,
    gsgd_step,
    gsgd_step_bound,
    run,
    scaledgd_step,
)
from .synthetic import SynthConfig, make_instance

TAG_OBS = 3
TAG_FALSE_EDGES = 4
TAG_SPLIT = 5

BENCH_ETA_FACTORS = (0.1, 0.25, 0.5, 0.75, 1.0)
BENCH_BETAS = (0.5, 1.0, 2.0)
BENCH_LAMBDAS = (0.1, 1.0, 10.0)
BENCH_HEADER = ("method", "p", "sigma", "m", "n", "rmse", "time_s")
VALIDATION_FRACTION = 0.2


def sub_seed(seed, tag, index=0):
    return int(np.random.SeedSequence([int(seed), tag, index]).generate_state(1)[0])


@dataclass
class Problem:
    """One synthetic completion problem.

    ``graphs`` are the (possibly corrupted) graphs handed to the solvers;
    the truth was generated from the clean graphs in ``instance``.
    """

    instance: object
    obs: ObservationSet
    graphs: tuple
    p: float
    sigma: float
    false_edges: float

    @property
    def truth(self):
        return self.instance.X

    @property
    def rank(self):
        return self.instance.cfg.r


def make_problem(synth, p, sigma=0.0, false_edges=0.0):
    """Instance, Bernoulli observations and solver graphs for ``synth.seed``."""
    inst = make_instance(synth)
    obs = bernoulli_sample(inst.X, p, sigma, seed=sub_seed(synth.seed, TAG_OBS))
    G1, G2 = inst.G1, inst.G2
    if false_edges > 0:
        G1 = perturb_edges(G1, false_edges, sub_seed(synth.seed, TAG_FALSE_EDGES, 0))
        G2 = perturb_edges(G2, false_edges, sub_seed(synth.seed, TAG_FALSE_EDGES, 1))
    return Problem(inst, obs, (G1, G2), p, sigma, false_edges)


def solve(problem, config, truth="complement"):
    """Run ``config`` on ``problem``; failures return the partial trace.

    The trace's ``reason`` is ``"error"`` when the solver aborted.
    """
    target = problem.truth if truth == "complement" else truth
    try:
        return run(config, problem.obs, problem.rank, graphs=problem.graphs, truth=target)
    except SolverFailure as exc:
        return exc.trace


# bench ------------------------------------------------------------------

@dataclass
class BenchConfig:
    """Bake-off over ``methods x ps x sigmas``; RMSE and time are averaged over ``seeds``."""

    methods: Sequence[str] = ("gd", "scaledgd", "glgd", "gsgd")
    ps: Sequence[float] = (0.2,)
    sigmas: Sequence[float] = (0.0,)
    synth: SynthConfig = field(default_factory=SynthConfig)
    seeds: Sequence[int] = (0,)
    false_edges: float = 0.0
    max_iters: int = 200
    eta_factors: Sequence[float] = BENCH_ETA_FACTORS
    betas: Sequence[float] = BENCH_BETAS
    lambdas: Sequence[float] = BENCH_LAMBDAS
    init: str = "graph"
    workers: int = 1

    def __post_init__(self):
        if not self.methods:
            raise BadParameter("bench needs at least one method")
        for m in self.methods:
            if m not in METHODS:
                raise BadParameter(f"unknown method {m!r}; expected one of {METHODS}")
        if not self.ps or not self.sigmas or not self.seeds:
            raise BadParameter("bench needs at least one p, sigma and seed")
        if not self.eta_factors:
            raise BadParameter("eta grid is empty")
        if any(m in GRAPH_METHODS for m in self.methods) and not (self.betas and self.lambdas):
            raise BadParameter("beta and lambda grids must be non-empty for graph methods")


def _default_eta(method, beta):
    return gsgd_step_bound(beta) if method == "gsgd" else DEFAULT_ETA[method]


def candidate_configs(method, bc):
    """Grid of solver configs searched for ``method``."""
    if method == "gsgd":
        pairs = list(itertools.product(bc.betas, bc.lambdas))
    elif method == "glgd":
        pairs = [(b, 1.0) for b in bc.betas]  # lambda does not enter the GL-GD update
    else:
        pairs = [(0.0, 1.0)]
    out = []
    for beta, lam in pairs:
        for f in bc.eta_factors:
            out.append(SolverConfig(method=method, eta=f * _default_eta(method, beta), beta=beta, lam=lam,
                                    max_iters=bc.max_iters, init=bc.init))
    return out


def _validation_score(trace):
    if trace.reason == "error" or not trace.records:
        return np.inf
    v = trace.records[-1].test_rmse
    return v if np.isfinite(v) else np.inf


def bench_cell(method, p, sigma, seed, bc):
    """Grid search on an 80/20 split, then rerun the best config on all observed entries.

    Returns ``(rmse, time_s, best_config)``.
    """
    problem = make_problem(replace(bc.synth, seed=seed), p, sigma, bc.false_edges)
    train, val = split(problem.obs, VALIDATION_FRACTION, sub_seed(seed, TAG_SPLIT))
    train = train.with_p(p * (1.0 - VALIDATION_FRACTION))
    best, best_score = None, np.inf
    for cfg in candidate_configs(method, bc):
        try:
            tr = run(cfg, train, problem.rank, graphs=problem.graphs, truth=val)
        except SolverFailure as exc:
            tr = exc.trace
        score = _validation_score(tr)
        if score < best_score:
            best, best_score = cfg, score
    if best is None:
        return np.nan, 0.0, None
    t0 = time.perf_counter()
    tr = solve(problem, best)
    elapsed = time.perf_counter() - t0
    rmse = tr.final_test_rmse if tr.reason != "error" else np.nan
    return float(rmse), float(elapsed), best


def _cell_job(args):
    method, p, sigma, seed, bc = args
    rmse, t, _ = bench_cell(method, p, sigma, seed, bc)
    return rmse, t


def bench(bc):
    """Rows ``(method, p, sigma, m, n, rmse, time_s)`` in method-major order."""
    cells = list(itertools.product(bc.methods, bc.ps, bc.sigmas))
    jobs = [(m, p, s, seed, bc) for m, p, s in cells for seed in bc.seeds]
    if bc.workers > 1:
        with ProcessPoolExecutor(max_workers=bc.workers) as ex:
            results = list(ex.map(_cell_job, jobs))
    else:
        results = [_cell_job(j) for j in jobs]
    rows = []
    k = len(bc.seeds)
    for c, (m, p, s) in enumerate(cells):
        res = results[c * k:(c + 1) * k]
        rmse = float(np.mean([r[0] for r in res]))
        t = float(np.mean([r[1] for r in res]))
        rows.append((m, float(p), float(s), bc.synth.m, bc.synth.n, rmse, t))
    return rows


# toy problem -------------------------------------------------------------

TOY_CASES = {"real_edge": (1.0, 1.0), "false_edge": (2.0, 1.0)}
TOY_METHODS = ("scaledgd", "glgd", "gsgd")


@dataclass
class ToyResult:
    """Per-method arrays of shape ``(iters, 3)`` with columns ``W1, W2, rmse``."""

    case: str
    x: tuple
    traces: dict
    initial: FactorPair

    def final_rmse(self, method):
        return float(self.traces[method][-1, 2])


def toy2d(case, iters=100, seed=0, beta=1.0, lam=1.0, eta=None):
    """Factor a fully observed ``2 x 1`` target ``x`` with one edge between its rows.

    Each method starts from the same random ``(W0, H0)`` and runs ``iters``
    steps. ``eta`` maps method to step size; defaults are 0.5 for ScaledGD
    and GL-GD and the guaranteed step for GSGD.
    """
    if case not in TOY_CASES:
        raise BadParameter(f"unknown toy case {case!r}; expected one of {tuple(TOY_CASES)}")
    x = np.array(TOY_CASES[case])
    X = x[:, None]
    obs = ObservationSet.from_dense(X, np.ones_like(X, dtype=bool), p=1.0)
    G = SimilarityGraph.path(2)
    Gc = SimilarityGraph.empty(1)
    opW, opH = build_operator(G, beta, lam), build_operator(Gc, beta, lam)
    LtW, LtH = np.asarray(G.laplacian), np.asarray(Gc.laplacian)
    steps = {"scaledgd": 0.5, "glgd": 0.5, "gsgd": gsgd_step_bound(beta)}
    steps.update(eta or {})

    rng = np.random.default_rng(seed)
    F0 = FactorPair(rng.uniform(0.1, 1.0, size=(2, 1)), rng.uniform(0.5, 1.5, size=(1, 1)))
    traces = {}
    for method in TOY_METHODS:
        F = F0.copy()
        out = np.empty((iters, 3))
        for t in range(iters):
            if method == "scaledgd":
                F = scaledgd_step(F, obs, steps[method])
            elif method == "glgd":
                F = glgd_step(F, obs, steps[method], beta, LtW, LtH)
            else:
                F = gsgd_step(F, obs, steps[method], opW, opH)
            out[t] = (F.W[0, 0], F.W[1, 0], np.sqrt(np.mean((F.product() - X) ** 2)))
        traces[method] = out
    return ToyResult(case, tuple(x), traces, F0)


def false_edge_ratio(synth, proportion, lam=1.0):
    """Spectral-norm ratio of the truth under graphs with ``proportion`` false edges."""
    inst = make_instance(synth)
    G1, G2 = inst.G1, inst.G2
    if proportion > 0:
        G1 = perturb_edges(G1, proportion, sub_seed(synth.seed, TAG_FALSE_EDGES, 0))
        G2 = perturb_edges(G2, proportion, sub_seed(synth.seed, TAG_FALSE_EDGES, 1))
    opW, opH = build_operator(G1, 1.0, lam), build_operator(G2, 1.0, lam)
    return psi_smoothness(inst.X, opW, opH, r=synth.r).ratio

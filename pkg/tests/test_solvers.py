import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_connected_graph
from gsgd.errors import BadParameter, MissingGraph, RankCollapse
from gsgd.factors import FactorPair
from gsgd.graphs import SimilarityGraph, build_operator
from gsgd.observation import ObservationSet, bernoulli_sample, loss
from gsgd.solvers import (
    SolverConfig,
    SolverFailure,
    gd_step,
    glgd_step,
    gsgd_step,
    gsgd_step_bound,
    run,
    scaledgd_step,
)
from gsgd.synthetic import SynthConfig, make_instance


def scalar_problem():
    obs = ObservationSet.from_dense(np.array([[1.0]]), np.array([[True]]), p=1.0)
    return obs, FactorPair(np.array([[0.5]]), np.array([[0.5]]))


def test_step_bound_value():
    assert gsgd_step_bound(1.0) == pytest.approx(2 / (4 + np.sqrt(2)))
    assert gsgd_step_bound(0.0) == pytest.approx(2 / 3)


def test_gd_scalar():
    obs, F = scalar_problem()
    out = gd_step(F, obs, 0.5)
    assert out.W[0, 0] == pytest.approx(0.6875, abs=1e-15)
    assert out.H[0, 0] == pytest.approx(0.6875, abs=1e-15)


def test_scaledgd_scalar():
    obs, F = scalar_problem()
    out = scaledgd_step(F, obs, 0.5)
    assert out.W[0, 0] == pytest.approx(1.25, abs=1e-15)
    assert out.H[0, 0] == pytest.approx(1.25, abs=1e-15)


def exact_fit(rng, m=6, n=5, r=2, p=0.6):
    W, H = rng.standard_normal((m, r)), rng.standard_normal((n, r))
    return bernoulli_sample(W @ H.T, p, seed=1), FactorPair(W, H)


def test_fixed_points(rng, small_ops):
    obs, F = exact_fit(rng, 7, 5)
    opW, opH, G1, G2 = small_ops
    for out in (gd_step(F, obs, 0.3), scaledgd_step(F, obs, 0.3), gsgd_step(F, obs, 0.3, opW, opH),
                glgd_step(F, obs, 0.3, 0.0, G1.laplacian, G2.laplacian)):
        np.testing.assert_allclose(out.W, F.W, atol=1e-13)
        np.testing.assert_allclose(out.H, F.H, atol=1e-13)
    same = gd_step(F, obs, 0.0)
    assert np.array_equal(same.W, F.W)


def test_glgd_fixed_point_with_constant_factors():
    W, H = np.ones((4, 1)), np.full((3, 1), 2.0)
    obs = bernoulli_sample(W @ H.T, 0.8, seed=0)
    out = glgd_step(FactorPair(W, H), obs, 0.5, 1.0, SimilarityGraph.path(4).laplacian,
                    SimilarityGraph.path(3).laplacian)
    np.testing.assert_allclose(out.W, W, atol=1e-14)
    np.testing.assert_allclose(out.H, H, atol=1e-14)


def test_glgd_pure_shrinkage_on_two_path():
    W = np.array([[1.0], [-1.0]])
    H = np.array([[0.0]])
    obs = ObservationSet.from_dense(np.zeros((2, 1)), np.ones((2, 1), dtype=bool), p=1.0)
    out = glgd_step(FactorPair(W, H), obs, 1.0, 1.0, SimilarityGraph.path(2).laplacian, np.zeros((1, 1)))
    np.testing.assert_allclose(out.W, [[-1.0], [1.0]], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_degeneracy_chain_is_bitwise(seed):
    rng = np.random.default_rng(seed)
    m, n, r = int(rng.integers(2, 10)), int(rng.integers(2, 10)), 2
    obs = bernoulli_sample(rng.standard_normal((m, n)), 0.8, seed=seed)
    F = FactorPair(rng.standard_normal((m, r)), rng.standard_normal((n, r)))
    G1, G2 = random_connected_graph(m, rng), random_connected_graph(n, rng)
    a = gsgd_step(F, obs, 0.3, build_operator(G1, 0.0, 1.0), build_operator(G2, 0.0, 1.0))
    b = scaledgd_step(F, obs, 0.3)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.H, b.H)
    c = glgd_step(F, obs, 0.3, 0.0, G1.laplacian, G2.laplacian)
    d = gd_step(F, obs, 0.3)
    assert np.array_equal(c.W, d.W) and np.array_equal(c.H, d.H)


def dense_gsgd(F, Y, mask, p, eta, LtW, LtH, beta, lam):
    W, H = F
    LW = (1 + beta) * np.eye(len(W)) - beta * np.linalg.inv(np.eye(len(W)) + lam * LtW)
    LH = (1 + beta) * np.eye(len(H)) - beta * np.linalg.inv(np.eye(len(H)) + lam * LtH)
    R = np.where(mask, W @ H.T - Y, 0.0)
    Wn = W - eta / p * LW @ R @ H @ np.linalg.inv(H.T @ H)
    Hn = H - eta / p * LH @ R.T @ W @ np.linalg.inv(W.T @ W)
    return Wn, Hn


def test_gsgd_matches_dense_transcription_2x2():
    Y = np.array([[1.0, 2.0], [2.0, 4.1]])
    mask = np.ones((2, 2), dtype=bool)
    F = FactorPair(np.array([[0.9], [2.1]]), np.array([[1.2], [1.8]]))
    G = SimilarityGraph.path(2)
    op = build_operator(G, 1.0, 1.0)
    eta = gsgd_step_bound(1.0)
    out = gsgd_step(F, ObservationSet.from_dense(Y, mask, p=1.0), eta, op, op)
    Wn, Hn = dense_gsgd(F, Y, mask, 1.0, eta, G.laplacian, G.laplacian, 1.0, 1.0)
    np.testing.assert_allclose(out.W, Wn, atol=1e-12)
    np.testing.assert_allclose(out.H, Hn, atol=1e-12)


def test_gsgd_matches_dense_transcription_random(rng, small_ops):
    opW, opH, G1, G2 = small_ops
    X = rng.standard_normal((7, 5))
    obs = bernoulli_sample(X, 0.6, seed=8)
    F = FactorPair(rng.standard_normal((7, 2)), rng.standard_normal((5, 2)))
    out = gsgd_step(F, obs, 0.3, opW, opH)
    Wn, Hn = dense_gsgd(F, obs.dense(), obs.mask(), obs.p, 0.3, G1.laplacian, G2.laplacian, 1.0, 1.0)
    np.testing.assert_allclose(out.W, Wn, atol=1e-12)
    np.testing.assert_allclose(out.H, Hn, atol=1e-12)


@pytest.mark.parametrize("method", ["scaledgd", "gsgd"])
def test_preconditioned_steps_are_gauge_equivariant(rng, small_ops, method):
    opW, opH, _, _ = small_ops
    obs = bernoulli_sample(rng.standard_normal((7, 5)), 0.7, seed=2)
    F = FactorPair(rng.standard_normal((7, 2)), rng.standard_normal((5, 2)))
    ops = (opW, opH) if method == "gsgd" else (None, None)
    for Q in (np.diag([0.3, 4.0]), rng.standard_normal((2, 2)) + 2 * np.eye(2)):
        a = gsgd_step(F, obs, 0.4, *ops)
        b = gsgd_step(F.transform(Q), obs, 0.4, *ops)
        np.testing.assert_allclose(b.product(), a.product(), atol=1e-8)


def test_rank_collapse_is_reported():
    obs = ObservationSet.from_dense(np.ones((3, 3)), np.ones((3, 3), dtype=bool), p=1.0)
    F = FactorPair(np.ones((3, 2)), np.ones((3, 2)))
    with pytest.raises(RankCollapse):
        scaledgd_step(F, obs, 0.5)


def test_config_validation():
    with pytest.raises(BadParameter):
        SolverConfig(method="rgd")
    with pytest.raises(BadParameter):
        SolverConfig(eta=0.0)
    with pytest.raises(BadParameter):
        SolverConfig(max_iters=0)
    assert SolverConfig(method="gsgd", beta=1.0).step_size == pytest.approx(gsgd_step_bound(1.0))


@pytest.fixture(scope="module")
def problem():
    inst = make_instance(SynthConfig(m=60, n=50, r=3, seed=3))
    obs = bernoulli_sample(inst.X, 0.5, seed=11)
    return inst, obs


def test_run_requires_graphs(problem):
    _, obs = problem
    with pytest.raises(MissingGraph):
        run(SolverConfig(method="gsgd"), obs, 3)
    trace = run(SolverConfig(method="scaledgd", init="standard", max_iters=3), obs, 3)
    assert [r.iter for r in trace.records] == [1, 2, 3]


def test_run_stops_at_target(problem):
    inst, obs = problem
    cfg = SolverConfig(method="gsgd", max_iters=200, target_rmse=1e-3)
    trace = run(cfg, obs, 3, graphs=(inst.G1, inst.G2), truth=inst.X)
    assert trace.reason == "target"
    k = trace.iterations_to(1e-3)
    assert len(trace) == k and trace.records[-1].test_rmse <= 1e-3
    assert np.all(np.diff([r.iter for r in trace.records]) > 0)


def test_run_is_deterministic(problem):
    inst, obs = problem
    cfg = SolverConfig(method="gsgd", max_iters=20)
    a = run(cfg, obs, 3, graphs=(inst.G1, inst.G2), truth=inst.X)
    b = run(cfg, obs, 3, graphs=(inst.G1, inst.G2), truth=inst.X)
    assert np.array_equal(a.test_rmse, b.test_rmse)
    assert np.array_equal(a.factors.W, b.factors.W)


def test_run_plateau(problem):
    inst, obs = problem
    noisy = bernoulli_sample(inst.X, 0.5, 0.1, seed=11)
    trace = run(SolverConfig(method="gsgd", max_iters=2000), noisy, 3, graphs=(inst.G1, inst.G2), truth=inst.X)
    assert trace.reason == "plateau" and len(trace) < 2000


def test_run_failure_keeps_partial_trace(problem):
    inst, obs = problem
    with pytest.raises(SolverFailure) as info:
        run(SolverConfig(method="gd", eta=50.0, max_iters=500), obs, 3, graphs=(inst.G1, inst.G2), truth=inst.X)
    assert info.value.trace.reason == "error"


def test_run_with_projection(problem):
    from gsgd.initialization import ProjectionConfig, joint_incoherence
    inst, obs = problem
    cfg = SolverConfig(method="gsgd", max_iters=300, projection=ProjectionConfig(radius="auto", scaling="graph"))
    trace = run(cfg, obs, 3, graphs=(inst.G1, inst.G2), truth=inst.X)
    assert trace.radius > 0
    assert max(joint_incoherence(trace.factors, build_operator(inst.G1, 1, 1), build_operator(inst.G2, 1, 1))) \
        <= trace.radius * (1 + 1e-8)
    assert trace.final_test_rmse < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_descent_at_half_the_step_bound(seed):
    inst = make_instance(SynthConfig(m=100, n=100, r=3, seed=seed))
    obs = bernoulli_sample(inst.X, 0.3, seed=seed)
    opW, opH = build_operator(inst.G1, 1.0, 1.0), build_operator(inst.G2, 1.0, 1.0)
    from gsgd.initialization import graph_spectral_init
    F = graph_spectral_init(obs, opW, opH, 3)
    eta = 0.5 * gsgd_step_bound(1.0)
    losses = [loss(obs, F)]
    for _ in range(150):
        F = gsgd_step(F, obs, eta, opW, opH)
        losses.append(loss(obs, F))
    losses = np.array(losses)
    decreases = np.diff(losses) <= 1e-12 * losses[:-1] + 1e-28
    assert decreases.mean() >= 0.99


def with_condition_number(X, r, kappa):
    U, S, Vt = np.linalg.svd(X)
    s = np.geomspace(kappa, 1.0, r)
    Y = (U[:, :r] * s) @ Vt[:r]
    return Y * np.sqrt(Y.size) / np.linalg.norm(Y)


def test_iterations_grow_mildly_with_condition_number():
    inst = make_instance(SynthConfig(m=200, n=200, r=5, seed=0))
    counts = {}
    for kappa in (1.0, 10.0):
        X = with_condition_number(inst.X, 5, kappa)
        obs = bernoulli_sample(X, 0.3, seed=21)
        cfg = SolverConfig(method="gsgd", max_iters=500, target_rmse=1e-4)
        trace = run(cfg, obs, 5, graphs=(inst.G1, inst.G2), truth=X)
        counts[kappa] = trace.iterations_to(1e-4)
    assert counts[1.0] is not None and counts[10.0] is not None
    assert counts[10.0] <= 3 * counts[1.0]

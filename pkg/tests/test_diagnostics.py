import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_connected_graph
from gsgd.diagnostics import (
    aligned_distance,
    alignment_foc,
    graph_incoherence_mu,
    psi_smoothness,
    regularizer_values,
)
from gsgd.errors import RankOutOfRange, ZeroMatrix
from gsgd.factors import FactorPair
from gsgd.graphs import build_operator, identity_operator
from gsgd.observation import bernoulli_sample
from gsgd.synthetic import SynthConfig, generate_smooth_truth, make_instance


def truth_factors(rng, m, n, r):
    X = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    U, S, Vt = np.linalg.svd(X)
    return FactorPair(U[:, :r] * np.sqrt(S[:r]), Vt[:r].T * np.sqrt(S[:r])), S[:r]


def objective(F, Fs, opW, opH, S, Q):
    # dense evaluation of the weighted alignment objective
    LhW, LhH = opW.dense("Lhalf"), opH.dense("Lhalf")
    root = np.sqrt(S)
    a = LhW @ (F.W @ Q - Fs.W) * root
    b = LhH @ (F.H @ np.linalg.inv(Q).T - Fs.H) * root
    return np.sum(a * a) + np.sum(b * b)


def test_psi_without_filtering_is_zero(rng, small_ops):
    _, _, G1, G2 = small_ops
    X = rng.standard_normal((7, 5))
    res = psi_smoothness(X, build_operator(G1, 1.0, 0.0), build_operator(G2, 1.0, 0.0))
    assert res.ratio == 0.0 and res.psi == 0.0


def test_psi_definition(rng, small_ops):
    opW, opH, _, _ = small_ops
    X = rng.standard_normal((7, 2)) @ rng.standard_normal((2, 5))
    res = psi_smoothness(X, opW, opH, r=2)
    D = opW.dense("A") @ X @ opH.dense("A") - X
    ratio = np.linalg.norm(D, 2) / np.linalg.norm(X, 2)
    assert res.ratio == pytest.approx(ratio, rel=1e-8)
    assert res.psi == pytest.approx(5 / 2 * ratio ** 2, rel=1e-8)


def test_psi_zero_matrix(small_ops):
    opW, opH, _, _ = small_ops
    with pytest.raises(ZeroMatrix):
        psi_smoothness(np.zeros((7, 5)), opW, opH)


@pytest.mark.parametrize("seed", range(5))
def test_smooth_truth_has_smaller_ratio_than_raw(seed):
    cfg = SynthConfig(m=60, n=50, r=3, seed=seed)
    inst = make_instance(cfg)
    X, Z = generate_smooth_truth(cfg, inst.G1, inst.G2, return_parts=True)
    opW, opH = build_operator(inst.G1, 1.0, 1.0), build_operator(inst.G2, 1.0, 1.0)
    assert psi_smoothness(X, opW, opH, 3).ratio < psi_smoothness(Z, opW, opH, 3).ratio


def test_mu_closed_forms():
    I4, I3 = identity_operator(4), identity_operator(3)
    assert graph_incoherence_mu(np.ones((4, 3)), 1, I4, I3) == pytest.approx(1.0)
    E = np.zeros((4, 3))
    E[0, 0] = 1.0
    assert graph_incoherence_mu(E, 1, I4, I3) == pytest.approx(4.0)


def test_mu_reduces_to_standard_incoherence(rng, small_ops):
    _, _, G1, G2 = small_ops
    X = rng.standard_normal((7, 2)) @ rng.standard_normal((2, 5))
    U, _, Vt = np.linalg.svd(X)
    std = max(7 / 2 * np.max(np.sum(U[:, :2] ** 2, 1)), 5 / 2 * np.max(np.sum(Vt[:2] ** 2, 0)))
    mu = graph_incoherence_mu(X, 2, build_operator(G1, 0.0, 1.0), build_operator(G2, 0.0, 1.0))
    assert mu == pytest.approx(std, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_mu_at_least_one(seed):
    rng = np.random.default_rng(seed)
    m, n, r = int(rng.integers(2, 12)), int(rng.integers(2, 12)), 1
    opW = build_operator(random_connected_graph(m, rng), float(rng.uniform(0, 2)), 1.0)
    opH = build_operator(random_connected_graph(n, rng), float(rng.uniform(0, 2)), 1.0)
    X = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    assert graph_incoherence_mu(X, r, opW, opH) >= 1 - 1e-12


def test_mu_rank_too_large(small_ops):
    opW, opH, _, _ = small_ops
    with pytest.raises(RankOutOfRange):
        graph_incoherence_mu(np.ones((7, 5)), 2, opW, opH)


def test_alignment_identity(rng, small_ops):
    opW, opH, _, _ = small_ops
    Fs, S = truth_factors(rng, 7, 5, 2)
    res = aligned_distance(Fs, Fs, opW, opH, S)
    assert res.dist <= 1e-10 and res.converged
    np.testing.assert_allclose(res.Q, np.eye(2), atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_alignment_recovers_gauge(seed):
    rng = np.random.default_rng(seed)
    m, n, r = int(rng.integers(3, 10)), int(rng.integers(3, 10)), int(rng.integers(1, 4))
    r = min(r, m, n)
    opW = build_operator(random_connected_graph(m, rng), 1.0, 1.0)
    opH = build_operator(random_connected_graph(n, rng), 1.0, 1.0)
    Fs, S = truth_factors(rng, m, n, r)
    Q0 = rng.standard_normal((r, r))
    if np.linalg.cond(Q0) > 50:
        Q0 = Q0 + 3 * np.eye(r)
    res = aligned_distance(Fs.transform(Q0), Fs, opW, opH, S)
    scale = np.sqrt(np.sum(S) * 2)
    assert res.dist <= 1e-8 * scale
    np.testing.assert_allclose(res.Q, np.linalg.inv(Q0), atol=1e-6 * np.linalg.cond(Q0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_alignment_gauge_invariance(seed):
    rng = np.random.default_rng(seed)
    m, n, r = 8, 6, 2
    opW = build_operator(random_connected_graph(m, rng), 1.0, 1.0)
    opH = build_operator(random_connected_graph(n, rng), 1.0, 1.0)
    Fs, S = truth_factors(rng, m, n, r)
    F = FactorPair(Fs.W + 0.1 * rng.standard_normal((m, r)), Fs.H + 0.1 * rng.standard_normal((n, r)))
    Q0 = rng.standard_normal((r, r)) + 2 * np.eye(r)
    a = aligned_distance(F, Fs, opW, opH, S).dist
    b = aligned_distance(F.transform(Q0), Fs, opW, opH, S).dist
    assert abs(a - b) <= 1e-6 * max(a, 1e-12)


def scalar_alignment_oracle(w, h, ws, hs, s, LW, LH):
    """Global minimiser of s*(a q^2 - 2 b q + c / q^2 - 2 d / q) + const over real q != 0."""
    a, b = w @ LW @ w, w @ LW @ ws
    c, d = h @ LH @ h, h @ LH @ hs
    const = ws @ LW @ ws + hs @ LH @ hs

    def f(q):
        return s * (a * q * q - 2 * b * q + c / q ** 2 - 2 * d / q + const)

    roots = np.roots([a, -b, 0.0, d, -c])
    best = None
    for q in roots[np.abs(roots.imag) < 1e-9].real:
        for _ in range(5):  # Newton polish on the quartic
            g = a * q ** 4 - b * q ** 3 + d * q - c
            q -= g / (4 * a * q ** 3 - 3 * b * q ** 2 + d)
        if best is None or f(q) < f(best):
            best = q
    return best, np.sqrt(max(f(best), 0.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 2.0))
def test_alignment_rank_one_closed_form(seed, beta):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    opW = build_operator(random_connected_graph(m, rng), beta, 1.0)
    opH = build_operator(random_connected_graph(n, rng), beta, 1.0)
    F = FactorPair(rng.standard_normal((m, 1)), rng.standard_normal((n, 1)))
    Fs = FactorPair(rng.standard_normal((m, 1)), rng.standard_normal((n, 1)))
    s = float(rng.uniform(0.5, 3.0))
    q, d = scalar_alignment_oracle(F.W[:, 0], F.H[:, 0], Fs.W[:, 0], Fs.H[:, 0], s,
                                   opW.dense("L"), opH.dense("L"))
    res = aligned_distance(F, Fs, opW, opH, [s])
    assert res.Q[0, 0] == pytest.approx(q, rel=1e-8, abs=1e-10)
    assert res.dist == pytest.approx(d, rel=1e-8, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_alignment_first_order_condition_and_infimum(seed):
    rng = np.random.default_rng(seed)
    m, n, r = int(rng.integers(3, 10)), int(rng.integers(3, 10)), 2
    beta = float(rng.choice([0.0, 1.0]))
    opW = build_operator(random_connected_graph(m, rng), beta, 1.0)
    opH = build_operator(random_connected_graph(n, rng), beta, 1.0)
    Fs, S = truth_factors(rng, m, n, r)
    F = FactorPair(Fs.W + 0.3 * rng.standard_normal((m, r)), Fs.H + 0.3 * rng.standard_normal((n, r)))
    res = aligned_distance(F, Fs, opW, opH, S)
    if res.converged:
        assert res.foc_residual <= 1e-6 * (1 + res.dist ** 2)
        assert alignment_foc(F, Fs, opW, opH, S, res.Q) == pytest.approx(res.foc_residual)
    assert res.dist ** 2 == pytest.approx(objective(F, Fs, opW, opH, S, res.Q), rel=1e-9, abs=1e-14)
    assert res.dist ** 2 <= objective(F, Fs, opW, opH, S, np.eye(r)) + 1e-12


def test_regularizers_trivial_cases(rng, small_ops):
    opW, opH, G1, G2 = small_ops
    W = np.ones((7, 2)) * [1.5, -2.0]
    H = np.ones((5, 2)) * [0.5, 1.0]
    obs = bernoulli_sample(W @ H.T, 0.6, seed=1)
    lap, higher = regularizer_values(FactorPair(W, H), obs, opW, opH, G1.laplacian, G2.laplacian, 1.0)
    assert abs(lap) <= 1e-12 and abs(higher) <= 1e-12


def test_regularizers_match_dense_traces(rng):
    G1, G2 = random_connected_graph(10, rng), random_connected_graph(8, rng)
    beta = 0.7
    opW, opH = build_operator(G1, beta, 2.0), build_operator(G2, beta, 2.0)
    obs = bernoulli_sample(rng.standard_normal((10, 8)), 0.5, seed=2)
    F = FactorPair(rng.standard_normal((10, 2)), rng.standard_normal((8, 2)))
    lap, higher = regularizer_values(F, obs, opW, opH, G1.laplacian, G2.laplacian, beta)
    Lt1, Lt2 = G1.laplacian, G2.laplacian
    ref_lap = beta / 2 * (np.trace(F.W.T @ Lt1 @ F.W) + np.trace(F.H.T @ Lt2 @ F.H))
    R = np.where(obs.mask(), F.W @ F.H.T - obs.dense(), 0.0)
    A = np.linalg.inv(np.eye(10) + 2.0 * Lt1)
    B = np.linalg.inv(np.eye(8) + 2.0 * Lt2)
    ref_higher = beta / (2 * obs.p) * (np.trace(R.T @ (np.eye(10) - A) @ R) + np.trace(R @ (np.eye(8) - B) @ R.T))
    assert lap == pytest.approx(ref_lap, rel=1e-10)
    assert higher == pytest.approx(ref_higher, rel=1e-10)

"""Theory-side quantities: graph smoothness, graph incoherence, aligned distance."""

import logging
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, RankOutOfRange, ZeroMatrix
from .factors import FactorPair
from .linalg import as_matrix, l2inf_norm, spectral_norm, top_r_svd
from .observation import masked_residual

logger = logging.getLogger(__name__)

ALIGN_GRAD_TOL = 1e-10
ALIGN_MAX_ITER = 500
ALIGN_COND_MAX = 1e10
ALIGN_STALL_RTOL = 1e-9


class PsiResult(NamedTuple):
    ratio: float
    psi: float


class AlignmentResult(NamedTuple):
    Q: np.ndarray
    dist: float
    foc_residual: float
    converged: bool


def psi_smoothness(X, opW, opH, r=None):
    """Spectral-norm ratio ``||A X B - X|| / ||X||`` and ``psi = (m ^ n)/r * ratio^2``.

    ``r`` defaults to the numerical rank of ``X``.
    """
    X = as_matrix(X, "X")
    m, n = X.shape
    if opW.n != m or opH.n != n:
        raise DimensionMismatch(f"operators ({opW.n}, {opH.n}) do not match X {X.shape}")
    nx = spectral_norm(X, tol=1e-8)
    if nx == 0.0:
        raise ZeroMatrix("psi is undefined for the zero matrix")
    if r is None:
        r = max(1, int(np.linalg.matrix_rank(X)))
    AXB = opH.apply("A", opW.apply("A", X).T).T
    ratio = spectral_norm(AXB - X, tol=1e-8) / nx
    return PsiResult(float(ratio), float(min(m, n) / r * ratio ** 2))


def graph_incoherence_mu(X, r, opW, opH):
    """Smallest ``mu`` for which ``X`` is ``mu``-graph incoherent at rank ``r``."""
    X = as_matrix(X, "X")
    m, n = X.shape
    if opW.n != m or opH.n != n:
        raise DimensionMismatch(f"operators ({opW.n}, {opH.n}) do not match X {X.shape}")
    svd = top_r_svd(X, r)
    if svd.S[-1] <= 1e-12 * max(svd.S[0], np.finfo(float).tiny):
        raise RankOutOfRange(f"X has numerical rank below {r}")
    mu_w = m / r * l2inf_norm(opW.apply("Lhalf", svd.U)) ** 2
    mu_h = n / r * l2inf_norm(opH.apply("Lhalf", svd.V)) ** 2
    return float(max(mu_w, mu_h))


def _alignment_residual(Wh, Hh, Wsh, Hsh, root, Q):
    P = np.linalg.inv(Q).T
    RW = (Wh @ Q - Wsh) * root
    RH = (Hh @ P - Hsh) * root
    return RW, RH, P


def _alignment_jacobian(Wh, Hh, root, P):
    r = root.size
    HP = Hh @ P
    PS = P * root
    cols = []
    for a in range(r):
        for b in range(r):
            dW = np.zeros_like(Wh)
            dW[:, b] = Wh[:, a] * root[b]
            dH = -np.outer(HP[:, b], PS[a])
            cols.append(np.concatenate([dW.ravel(), dH.ravel()]))
    return np.column_stack(cols)


def alignment_foc(F, F_star, opW, opH, Sigma_star, Q):
    """Frobenius norm of the first-order optimality condition of the alignment at ``Q``."""
    S = np.asarray(Sigma_star, dtype=float)
    Wh = opW.apply("Lhalf", F[0])
    Hh = opH.apply("Lhalf", F[1])
    Wsh = opW.apply("Lhalf", F_star[0])
    Hsh = opH.apply("Lhalf", F_star[1])
    P = np.linalg.inv(Q).T
    WQ, HP = Wh @ Q, Hh @ P
    G = (WQ.T @ (WQ - Wsh)) * S - S[:, None] * ((HP - Hsh).T @ HP)
    return float(np.linalg.norm(G))


def _alignment_starts(Wh, Hh, Wsh, Hsh, r):
    # The iterate cannot cross det Q = 0, so both sign components of GL(r) are
    # seeded: I, a reflection, and the least-squares fits of each factor.
    J = np.eye(r)
    J[0, 0] = -1.0
    starts = [np.eye(r), J]
    fits = [np.linalg.lstsq(Wh, Wsh, rcond=None)[0]]
    P = np.linalg.lstsq(Hh, Hsh, rcond=None)[0]
    if np.all(np.isfinite(P)) and np.linalg.cond(P) < ALIGN_COND_MAX:
        fits.append(np.linalg.inv(P).T)
    for Q in fits:
        if np.all(np.isfinite(Q)) and np.linalg.cond(Q) < ALIGN_COND_MAX:
            starts.append(Q)
    return starts


def _alignment_hessian(Wh, Hh, root, P, RH, J):
    # Gauss-Newton part plus the curvature of Q -> Q^{-T} weighted by the H residual
    r = root.size
    G = Hh.T @ (RH * root)
    K = P @ G.T @ P
    T = np.einsum("cb,ad->abcd", K, P) + np.einsum("ad,cb->abcd", K, P)
    return J.T @ J + T.reshape(r * r, r * r)


def _damped_newton(Wh, Hh, Wsh, Hsh, root, Q, stall_tol):
    # Levenberg-Marquardt on the exact Hessian with gain-ratio damping updates.
    # Plain Gauss-Newton zig-zags on large-residual alignments.
    r = root.size
    RW, RH, P = _alignment_residual(Wh, Hh, Wsh, Hsh, root, Q)
    res = np.concatenate([RW.ravel(), RH.ravel()])
    f = float(res @ res)
    damp, nu = None, 2.0
    converged = False
    for _ in range(ALIGN_MAX_ITER):
        J = _alignment_jacobian(Wh, Hh, root, P)
        g = J.T @ res
        gnorm = np.linalg.norm(g)
        if gnorm <= ALIGN_GRAD_TOL:
            converged = True
            break
        Hs = _alignment_hessian(Wh, Hh, root, P, RH, J)
        if damp is None:
            damp = 1e-3 * max(float(np.max(np.abs(np.diag(Hs)))), 1e-300)
        improved = False
        while damp < 1e16 * max(1.0, float(np.max(np.abs(Hs)))):
            try:
                C = np.linalg.cholesky(Hs + damp * np.eye(r * r))
            except np.linalg.LinAlgError:
                damp *= nu
                nu *= 2.0
                continue
            step = -np.linalg.solve(C.T, np.linalg.solve(C, g))
            Qn = Q + step.reshape(r, r)
            if np.linalg.cond(Qn) < ALIGN_COND_MAX:
                RWn, RHn, Pn = _alignment_residual(Wh, Hh, Wsh, Hsh, root, Qn)
                resn = np.concatenate([RWn.ravel(), RHn.ravel()])
                fn = float(resn @ resn)
                predicted = -(g @ step + 0.5 * step @ Hs @ step)
                # near the minimum f is flat to rounding; then require a smaller gradient
                flat = fn <= f * (1.0 + 4.0 * np.finfo(float).eps)
                if fn < f or (flat and np.linalg.norm(_alignment_jacobian(Wh, Hh, root, Pn).T @ resn) < gnorm):
                    rho = 0.5 * (f - fn) / predicted if predicted > 0 else 0.0
                    Q, P, RH, res, f = Qn, Pn, RHn, resn, fn
                    damp *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                    nu = 2.0
                    improved = True
                    break
            damp *= nu
            nu *= 2.0
        if not improved:
            # no descent step left at working precision
            converged = gnorm <= stall_tol
            break
    return Q, f, converged


def aligned_distance(F, F_star, opW, opH, Sigma_star):
    """Graph-aware distance after optimal alignment by an invertible ``Q``.

    Minimises ``||L_W^{1/2}(W Q - W*) S^{1/2}||_F^2 + ||L_H^{1/2}(H Q^{-T} - H*) S^{1/2}||_F^2``
    by damped Newton steps over the entries of ``Q``, started from ``Q = I``,
    from a reflection and from the least-squares alignments of each factor;
    the best local minimum is returned.
    ``dist`` is the square root of the minimised objective. A run that does
    not meet the gradient tolerance returns the best point found with
    ``converged=False`` and logs a warning.
    """
    W, H = F
    Ws, Hs = F_star
    S = np.asarray(Sigma_star, dtype=float).ravel()
    r = W.shape[1]
    if H.shape[1] != r or Ws.shape != W.shape or Hs.shape != H.shape or S.size != r:
        raise DimensionMismatch("factor shapes and Sigma_star must agree")
    if np.any(S <= 0):
        raise RankOutOfRange("Sigma_star must be positive")
    root = np.sqrt(S)
    Wh = opW.apply("Lhalf", W)
    Hh = opH.apply("Lhalf", H)
    Wsh = opW.apply("Lhalf", Ws)
    Hsh = opH.apply("Lhalf", Hs)
    # a stall at working precision counts as converged below this relative gradient
    scale = max(1.0, float(np.sum((Wsh * root) ** 2) + np.sum((Hsh * root) ** 2)))
    stall_tol = ALIGN_STALL_RTOL * scale

    best = None
    for Q0 in _alignment_starts(Wh, Hh, Wsh, Hsh, r):
        cand = _damped_newton(Wh, Hh, Wsh, Hsh, root, Q0, stall_tol)
        if best is None or cand[1] < best[1]:
            best = cand
    Q, f, converged = best

    foc = alignment_foc(F, F_star, opW, opH, S, Q)
    if not converged:
        logger.warning("alignment stopped before reaching the gradient tolerance (foc residual %.3g)", foc)
    return AlignmentResult(Q, float(np.sqrt(max(f, 0.0))), foc, bool(converged))


def regularizer_values(F, obs, opW, opH, LtW, LtH, beta):
    """``(beta/2 * [tr(W^T Lt_W W) + tr(H^T Lt_H H)], beta/(2p) * [row + column higher-order terms])``.

    The higher-order term evaluates the graph smoothness penalty of the
    masked residual ``R = P_Omega(W H^T - Y)``:
    ``tr(R^T (I - A) R) + tr(R (I - B) R^T)``.
    """
    W, H = F
    LtW = as_matrix(LtW, "LtW")
    LtH = as_matrix(LtH, "LtH")
    if LtW.shape != (W.shape[0], W.shape[0]) or LtH.shape != (H.shape[0], H.shape[0]):
        raise DimensionMismatch("Laplacian shapes do not match the factors")
    if opW.n != W.shape[0] or opH.n != H.shape[0]:
        raise DimensionMismatch("operators do not match the factor shapes")
    lap = 0.5 * beta * (np.sum(W * (LtW @ W)) + np.sum(H * (LtH @ H)))
    R = obs.dense(masked_residual(obs, F))
    row = np.sum(R * (R - opW.apply("A", R)))
    col = np.sum(R.T * (R.T - opH.apply("A", R.T)))
    higher = 0.5 * beta / obs.p * (row + col)
    return float(lap), float(higher)

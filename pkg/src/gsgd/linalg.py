"""Dense linear-algebra kernels used by the graph and solver modules.

Matrices are plain ``numpy.ndarray`` objects (float64, C order). The
functions here add the checks, determinism and tolerances the rest of the
package relies on; the heavy lifting is LAPACK through numpy/scipy.
"""

from typing import NamedTuple

import numpy as np
from scipy import linalg as sla

from .errors import NonFinite, NotPositiveDefinite, NotSymmetric, RankOutOfRange

SYMMETRY_RTOL = 1e-12
CHOLESKY_PIVOT_RTOL = 1e-12
ORTHO_TOL = 1e-10
SVD_OVERSAMPLE = 10
SVD_POWER_ITERS = 4
SVD_DENSE_CUTOFF = 400
SPECTRAL_NORM_BLOCK = 6
SPECTRAL_NORM_MAX_ITER = 20000


class SymEigen(NamedTuple):
    """Eigenpairs of a symmetric matrix, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self):
        return self.eigenvalues.shape[0]


class TopRSvd(NamedTuple):
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float64 array, raising ``NonFinite`` otherwise."""
    A = np.asarray(M, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return A


def sym_eigen(M):
    """Eigendecomposition of a symmetric matrix.

    Raises ``NotSymmetric`` when ``max|M - M^T|`` exceeds ``SYMMETRY_RTOL``
    times ``max(1, max|M|)``. The input is symmetrised before decomposition
    so round-off asymmetry below the tolerance cannot leak into the result.
    """
    A = as_matrix(M)
    n, k = A.shape
    if n != k:
        raise NotSymmetric(f"matrix is not square: {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if A.size and np.max(np.abs(A - A.T)) > SYMMETRY_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric to tolerance")
    w, Q = np.linalg.eigh(0.5 * (A + A.T))
    return SymEigen(w, Q)


def _fix_signs(U, V):
    # Largest-magnitude entry of each left singular vector made positive.
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def top_r_svd(M, r, seed=0):
    """Leading ``r`` singular triplets of ``M``.

    Small problems (``min(m, n) <= SVD_DENSE_CUTOFF``) use a dense LAPACK
    SVD. Larger ones use randomized subspace iteration with a fixed-seed
    Gaussian test matrix, ``SVD_OVERSAMPLE`` extra columns and
    ``SVD_POWER_ITERS`` power iterations.
    """
    A = as_matrix(M)
    m, n = A.shape
    r = int(r)
    if r < 1 or r > min(m, n):
        raise RankOutOfRange(f"rank {r} outside [1, {min(m, n)}]")

    if min(m, n) <= SVD_DENSE_CUTOFF:
        U, S, Vt = np.linalg.svd(A, full_matrices=False)
        U, V = U[:, :r], Vt[:r].T
        S = S[:r]
    else:
        rng = np.random.default_rng(seed)
        k = min(r + SVD_OVERSAMPLE, min(m, n))
        Y = A @ rng.standard_normal((n, k))
        Q, _ = np.linalg.qr(Y)
        for _ in range(SVD_POWER_ITERS):
            Z, _ = np.linalg.qr(A.T @ Q)
            Q, _ = np.linalg.qr(A @ Z)
        Ub, S, Vt = np.linalg.svd(Q.T @ A, full_matrices=False)
        U = Q @ Ub[:, :r]
        V = Vt[:r].T
        S = S[:r]

    U, V = _fix_signs(U, V)
    return TopRSvd(np.ascontiguousarray(U), np.maximum(S, 0.0), np.ascontiguousarray(V))


def spectral_norm(M, tol=1e-8, seed=0):
    """Largest singular value of ``M`` to relative tolerance ``tol``.

    Block power iteration on ``M^T M`` with Rayleigh-Ritz extraction. The
    starting block is drawn from a fixed-seed generator so the result is
    reproducible.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = as_matrix(M)
    m, n = A.shape
    if A.size == 0:
        return 0.0
    b = min(SPECTRAL_NORM_BLOCK, n, m)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, b)))
    prev = None
    sigma = 0.0
    for _ in range(SPECTRAL_NORM_MAX_ITER):
        AQ = A @ Q
        Z = A.T @ AQ
        # Rayleigh-Ritz on the current block
        T = AQ.T @ AQ
        theta = np.linalg.eigvalsh(0.5 * (T + T.T))[-1]
        sigma = float(np.sqrt(max(theta, 0.0)))
        if sigma == 0.0:
            return 0.0
        if prev is not None and abs(sigma - prev) <= 1e-3 * tol * sigma:
            break
        prev = sigma
        Q, _ = np.linalg.qr(Z)
    return sigma


def spd_solve(S, B):
    """Solve ``S X = B`` for symmetric positive-definite ``S`` via Cholesky.

    ``NotPositiveDefinite`` is raised when a Cholesky pivot falls below
    ``CHOLESKY_PIVOT_RTOL`` times the largest diagonal entry of ``S``.
    """
    S = as_matrix(S, "S")
    B = np.asarray(B, dtype=float)
    if S.shape[0] != S.shape[1] or S.shape[0] != B.shape[0]:
        raise ValueError(f"incompatible shapes {S.shape} and {B.shape}")
    dmax = float(np.max(np.diag(S))) if S.size else 0.0
    if dmax <= 0:
        raise NotPositiveDefinite("non-positive diagonal")
    try:
        C = np.linalg.cholesky(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    if np.min(np.diag(C)) ** 2 <= CHOLESKY_PIVOT_RTOL * dmax:
        raise NotPositiveDefinite("Cholesky pivot below tolerance")
    return sla.cho_solve((C, True), B)


def l2inf_norm(M):
    """Largest Euclidean row norm."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(M, axis=1)))

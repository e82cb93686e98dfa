from typing import NamedTuple

import numpy as np


class FactorPair(NamedTuple):
    """Current factorisation ``X ~= W H^T`` with ``W`` (m x r) and ``H`` (n x r)."""

    W: np.ndarray
    H: np.ndarray

    @property
    def r(self):
        return self.W.shape[1]

    def product(self):
        return self.W @ self.H.T

    def stacked(self):
        return np.vstack([self.W, self.H])

    def copy(self):
        return FactorPair(self.W.copy(), self.H.copy())

    def is_finite(self):
        return bool(np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.H)))

    def transform(self, Q):
        """Gauge transform ``(W Q, H Q^{-T})``; leaves ``W H^T`` unchanged."""
        return FactorPair(self.W @ Q, self.H @ np.linalg.inv(Q).T)

"""Ridge-regularised design matrix with a maintained inverse.

The state starts at ``Λ = I`` and ``λ = 0`` and absorbs observations
``(x, r)`` one at a time::

    Λ ← Λ + x xᵀ,   λ ← λ + r x

The inverse is kept current with the Sherman-Morrison formula and rebuilt
from scratch every ``REFACTOR_EVERY`` updates, or sooner if the product
``Λ · Λ⁻¹`` (checked every ``RESIDUAL_EVERY`` updates) drifts away from the
identity.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg.blas import daxpy as _daxpy, dger as _dger

from .errors import DimensionError

REFACTOR_EVERY = 256
RESIDUAL_TOL = 1e-8
RESIDUAL_EVERY = 16


class DesignState:
    """Design matrix ``Λ``, response vector ``λ`` and cached ``Λ⁻¹``.

    Parameters
    ----------
    d : int
        Dimension of the feature vectors, at least 1.

    Not safe for concurrent mutation; every replication owns its own state.
    """

    __slots__ = ("dim", "lambda_mat", "lambda_vec", "inv_mat", "count",
                 "_logdet", "_since_refactor")

    def __init__(self, d: int):
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise DimensionError(f"dimension must be a positive integer, got {d!r}")
        self.dim = int(d)
        # Fortran order lets the BLAS rank-one updates work in place
        self.lambda_mat = np.eye(self.dim, order="F")
        self.lambda_vec = np.zeros(self.dim)
        self.inv_mat = np.eye(self.dim, order="F")
        self.count = 0
        self._logdet = 0.0
        self._since_refactor = 0

    def _check(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionError(f"expected a vector of length {self.dim}, got shape {x.shape}")
        return x

    def rank_one_update(self, x, r: float) -> float:
        """Absorb the observation ``(x, r)``.

        Returns ``xᵀ Λ⁻¹ x`` evaluated before the update, which the potential
        sums need anyway.
        """
        x = self._check(x)
        v = self.inv_mat.dot(x)
        q = float(x.dot(v))
        if q < 0.0:
            q = 0.0
        # a + c·x xᵀ is exactly symmetric in floating point when a is, so Λ and
        # the Sherman-Morrison inverse need no explicit symmetrisation here
        self.lambda_mat = _dger(1.0, x, x, a=self.lambda_mat, overwrite_a=1)
        if r:
            self.lambda_vec = _daxpy(x, self.lambda_vec, a=float(r))
        self.count += 1
        self._since_refactor += 1
        self._logdet += math.log1p(q)
        if self._since_refactor >= REFACTOR_EVERY:
            self.refactor()
            return q
        self.inv_mat = _dger(-1.0 / (1.0 + q), v, v, a=self.inv_mat, overwrite_a=1)
        if self._since_refactor % RESIDUAL_EVERY == 0 and self.residual() > RESIDUAL_TOL:
            self.refactor()
        return q

    def refactor(self) -> None:
        """Recompute the inverse and log-determinant from ``Λ`` directly."""
        c, lower = cho_factor(self.lambda_mat, lower=True, check_finite=False)
        inv = cho_solve((c, lower), np.eye(self.dim), check_finite=False)
        self.inv_mat = np.asfortranarray(0.5 * (inv + inv.T))
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
        self._since_refactor = 0

    def residual(self) -> float:
        """Max-norm of ``Λ · Λ⁻¹ − I``."""
        prod = self.lambda_mat @ self.inv_mat
        prod.flat[:: self.dim + 1] -= 1.0
        return float(np.max(np.abs(prod)))

    def quadratic_form(self, x) -> float:
        """Return ``xᵀ Λ⁻¹ x``; callers take the square root for a width."""
        x = self._check(x)
        return max(0.0, float(x @ self.inv_mat @ x))

    def quadratic_forms(self, X: np.ndarray) -> np.ndarray:
        """Row-wise ``xᵀ Λ⁻¹ x`` for a stacked ``(m, d)`` array."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionError(f"expected an (m, {self.dim}) array, got shape {X.shape}")
        q = np.sum((X @ self.inv_mat) * X, axis=1)
        return np.maximum(q, 0.0)

    def solve_theta(self) -> np.ndarray:
        """Least-squares estimate ``Λ⁻¹ λ``."""
        return self.inv_mat @ self.lambda_vec

    def log_det(self) -> float:
        """``ln det Λ``, nonnegative because ``Λ ⪰ I``."""
        return max(0.0, self._logdet)

    def copy(self) -> "DesignState":
        other = DesignState(self.dim)
        other.lambda_mat = self.lambda_mat.copy(order="F")
        other.lambda_vec = self.lambda_vec.copy()
        other.inv_mat = self.inv_mat.copy(order="F")
        other.count = self.count
        other._logdet = self._logdet
        other._since_refactor = self._since_refactor
        return other

    def __repr__(self):
        return f"DesignState(dim={self.dim}, count={self.count}, log_det={self.log_det():.6g})"


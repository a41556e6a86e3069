"""Bandit policies sharing one select/update contract.

Every policy is reset with ``reset(d, n, T, seed)`` and then driven by
strictly alternating ``select(contexts)`` and ``update(chosen, reward)``
calls. Breaking the alternation raises :class:`ProtocolError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import check_context_set, make_rng
from .design import DesignState
from .errors import ProtocolError


class Policy:
    name = "policy"

    def __init__(self):
        self.d = self.n = self.T = 0
        self.t = 0
        self._pending = None

    def reset(self, d: int, n: int, T: int, seed: int = 0) -> None:
        self.d, self.n, self.T = int(d), int(n), int(T)
        self.t = 0
        self.rng = make_rng(seed)
        self._pending = None
        self._reset()

    def select(self, contexts) -> int:
        if self._pending is not None:
            raise ProtocolError("select called twice without an update")
        if self.t >= self.T:
            raise ProtocolError(f"horizon T={self.T} already exhausted")
        X = check_context_set(contexts, self.d)
        if X.shape[0] != self.n:
            raise ProtocolError(f"expected {self.n} arms, got {X.shape[0]}")
        i = int(self._select(X))
        if not 0 <= i < self.n:
            raise ProtocolError(f"policy chose arm {i} outside [0, {self.n})")
        self._pending = (X[i].copy(), i)
        return i

    def update(self, chosen: int, reward: float) -> None:
        if self._pending is None:
            raise ProtocolError("update called without a pending select")
        x, i = self._pending
        if int(chosen) != i:
            raise ProtocolError(f"update for arm {chosen} but arm {i} was selected")
        self.t += 1
        self._update(x, float(reward))
        self._pending = None

    def _reset(self) -> None:
        pass

    def _select(self, X: np.ndarray) -> int:
        raise NotImplementedError

    def _update(self, x: np.ndarray, reward: float) -> None:
        pass


# --------------------------------------------------------------------------
# Uniform random control
# --------------------------------------------------------------------------

def random_select(rng: np.random.Generator, n: int) -> int:
    if n < 1:
        raise ValueError("need at least one arm")
    return int(rng.integers(n))


class RandomPolicy(Policy):
    name = "random"

    def _select(self, X):
        return random_select(self.rng, X.shape[0])


# --------------------------------------------------------------------------
# Single design matrix ridge UCB
# --------------------------------------------------------------------------

class LinUCBPolicy(Policy):
    """Optimistic ridge regression with ``β_t = 1 + √(d ln((1+t)T))``."""

    name = "linucb"

    def _reset(self):
        self.state = DesignState(self.d)

    def beta(self, t: int) -> float:
        return 1.0 + math.sqrt(self.d * math.log((1 + t) * self.T))

    def _select(self, X):
        theta_hat = self.state.solve_theta()
        width = np.sqrt(self.state.quadratic_forms(X))
        score = X @ theta_hat + self.beta(self.t + 1) * width
        return int(np.argmax(score))

    def _update(self, x, reward):
        self.state.rank_one_update(x, reward)


# --------------------------------------------------------------------------
# Layered policies
# --------------------------------------------------------------------------

def layer_count(T: int, d: int) -> int:
    """``ζ₀ = max(1, ⌈log₂ √(T/d)⌉)``."""
    return max(1, math.ceil(0.5 * math.log2(T / d)))


@dataclass
class LayerVisit:
    """What one layer of the selection loop saw during a single round."""

    zeta: int
    survivors: np.ndarray
    varpi: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    estimates: Optional[np.ndarray] = None
    kept: Optional[np.ndarray] = None


@dataclass
class RoundTrace:
    chosen: int = -1
    zeta: Optional[int] = None
    clause: str = ""
    visits: list = field(default_factory=list)

    def rows(self, t: int):
        """Diagnostic rows ``(round, ζ, |N_ζ|, chosen, ϖ of chosen)``."""
        for v in self.visits:
            w = np.nan
            if v.varpi is not None and self.chosen in v.survivors:
                w = float(v.varpi[np.searchsorted(v.survivors, self.chosen)])
            yield (t, v.zeta, len(v.survivors), self.chosen, w)


class _Layered(Policy):
    """Shared bookkeeping for the layered SupLinUCB family.

    Each layer owns a :class:`DesignState` and the list of rounds it absorbed.
    With ``trace=True`` the policy keeps a :class:`RoundTrace` of the last
    selection in ``last_trace``.
    """

    def __init__(self, trace: bool = False):
        super().__init__()
        self.trace = trace

    def _reset(self):
        self.zeta0 = layer_count(self.T, self.d)
        self.layers = [DesignState(self.d) for _ in range(self.zeta0 + 1)]
        self.rounds = [[] for _ in range(self.zeta0 + 1)]
        self.last_zeta = None
        self.last_trace = None

    def _finish(self, tr: Optional[RoundTrace], i: int, zeta: Optional[int], clause: str) -> int:
        self.last_zeta = zeta
        if tr is not None:
            tr.chosen, tr.zeta, tr.clause = int(i), zeta, clause
            self.last_trace = tr
        return int(i)

    def _update(self, x, reward):
        if self.last_zeta is None:
            return
        self.layers[self.last_zeta].rank_one_update(x, reward)
        self.rounds[self.last_zeta].append(self.t)

    def layer_sizes(self) -> list:
        return [len(r) for r in self.rounds]


class VCLSupLinUCB(_Layered):
    """SupLinUCB with a confidence multiplier that shrinks with the width.

    For arm ``i`` at layer ``ζ``::

        ω = √(xᵢᵀ Λ_ζ⁻¹ xᵢ)
        α = 1 + max{1, √(max(0, ln(T ω²/d)))} · √(2 ln(n ζ₀))
        ϖ = α ω

    Layers are visited from ``ζ = 0``. At the last layer the lowest-index
    survivor is played. If every survivor has ``ϖ ≤ 2^{-ζ}`` the survivors
    whose estimate is within ``2^{1-ζ}`` of the best are passed to the next
    layer; otherwise the survivor with the largest ``ϖ`` is played (lowest
    index on ties). Only the stopping layer absorbs the observation.
    """

    name = "vcl"

    def _reset(self):
        super()._reset()
        self.log_nz = max(0.0, math.log(self.n * self.zeta0))
        self.sqrt_log_nz = math.sqrt(2.0 * self.log_nz)
        # rounds where the played arm had ϖ_ζ > 2^{1-ζ} with ζ > 0
        self.wide_pulls = 0

    def alpha(self, omega: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=np.float64)
        arg = self.T * omega * omega / self.d
        with np.errstate(divide="ignore"):
            inner = np.sqrt(np.maximum(0.0, np.log(arg)))
        return 1.0 + np.maximum(1.0, inner) * self.sqrt_log_nz

    def _select(self, X):
        tr = RoundTrace() if self.trace else None
        N = np.arange(self.n)
        zeta = 0
        while True:
            if zeta == self.zeta0:
                if tr is not None:
                    tr.visits.append(LayerVisit(zeta, N))
                return self._finish(tr, N[0], zeta, "last-layer")

            layer = self.layers[zeta]
            XN = X[N]
            theta_hat = layer.solve_theta()
            omega = np.sqrt(layer.quadratic_forms(XN))
            alpha = self.alpha(omega)
            varpi = alpha * omega
            thr = 2.0 ** -zeta
            visit = LayerVisit(zeta, N, varpi, omega, alpha) if tr is not None else None
            if tr is not None:
                tr.visits.append(visit)

            if np.all(varpi <= thr):
                est = XN @ theta_hat
                keep = est >= est.max() - 2.0 * thr
                if visit is not None:
                    visit.estimates, visit.kept = est, keep
                N = N[keep]
                zeta += 1
                continue

            j = int(np.argmax(varpi))
            if zeta > 0 and varpi[j] > 2.0 * thr:
                self.wide_pulls += 1
            return self._finish(tr, N[j], zeta, "explore")


class SupLinUCB(_Layered):
    """Classical SupLinUCB with a constant confidence multiplier.

    ``α = √(½ ln(2Tn/δ))`` with ``δ = 1/T`` and width ``(1+α)ω``. When every
    survivor's width is at most ``1/√T`` the arm with the largest upper
    confidence bound is played and the round is not stored in any layer.
    """

    name = "suplinucb"

    def _reset(self):
        super()._reset()
        delta = 1.0 / self.T
        self.alpha = math.sqrt(0.5 * math.log(2.0 * self.T * self.n / delta))
        self.exploit_cut = 1.0 / math.sqrt(self.T)

    def _select(self, X):
        tr = RoundTrace() if self.trace else None
        N = np.arange(self.n)
        zeta = 0
        while True:
            if zeta == self.zeta0:
                if tr is not None:
                    tr.visits.append(LayerVisit(zeta, N))
                return self._finish(tr, N[0], zeta, "last-layer")

            layer = self.layers[zeta]
            XN = X[N]
            theta_hat = layer.solve_theta()
            omega = np.sqrt(layer.quadratic_forms(XN))
            width = (1.0 + self.alpha) * omega
            est = XN @ theta_hat
            thr = 2.0 ** -zeta
            if tr is not None:
                tr.visits.append(LayerVisit(zeta, N, width, omega, None, est))

            if np.all(width <= self.exploit_cut):
                return self._finish(tr, N[int(np.argmax(est + width))], None, "exploit")
            if np.all(width <= thr):
                N = N[est >= est.max() - 2.0 * thr]
                zeta += 1
                continue
            return self._finish(tr, N[int(np.argmax(width))], zeta, "explore")


POLICIES = {
    "vcl": VCLSupLinUCB,
    "suplinucb": SupLinUCB,
    "linucb": LinUCBPolicy,
    "random": RandomPolicy,
}


def make_policy(name: str, **kwargs) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    return cls(**kwargs)

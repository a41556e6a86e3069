"""Bandit protocol: instances, pseudo-regret accounting and the simulation loop.

Rounds are 1-indexed (``t = 1..T``); arms are 0-indexed. Context sets are
plain ``(n, d)`` float arrays whose rows have Euclidean norm at most one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, ProtocolError

MASK64 = (1 << 64) - 1
NORM_TOL = 1e-12


# --------------------------------------------------------------------------
# Seeding
# --------------------------------------------------------------------------

def splitmix64(x: int) -> int:
    """One step of the SplitMix64 finaliser on a 64-bit word."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix_seed(*words: int) -> int:
    """Fold any number of integers into one 64-bit seed.

    ``h₀ = 0`` and ``hₖ = splitmix64(hₖ₋₁ ⊕ (wₖ mod 2⁶⁴))``. Replication ``r``
    of an experiment with base seed ``b`` is simulated with ``mix_seed(b, r)``.
    """
    h = 0
    for w in words:
        h = splitmix64(h ^ (int(w) & MASK64))
    return h


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


# --------------------------------------------------------------------------
# Instances
# --------------------------------------------------------------------------

def check_context_set(contexts, d: Optional[int] = None) -> np.ndarray:
    """Validate a context set and return it as an ``(n, d)`` float array."""
    X = np.asarray(contexts, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DimensionError(f"context set must be a non-empty (n, d) array, got shape {X.shape}")
    if d is not None and X.shape[1] != d:
        raise DimensionError(f"context vectors must have length {d}, got {X.shape[1]}")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms > 1.0 + NORM_TOL):
        raise DimensionError(f"context vector norm {norms.max():.6g} exceeds 1")
    return X


class Instance:
    """A linear bandit problem with an oblivious context sequence.

    Subclasses implement :meth:`contexts`, which must be a pure function of
    the round index. ``noise_sd = 0`` disables reward noise.
    """

    kind = "instance"

    def __init__(self, d: int, n: int, T: int, theta, noise_sd: float = 1.0):
        if d < 1 or n < 1 or T < 1:
            raise DimensionError(f"need d, n, T >= 1, got d={d}, n={n}, T={T}")
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (d,):
            raise DimensionError(f"theta must have shape ({d},), got {theta.shape}")
        if np.linalg.norm(theta) > 1.0 + NORM_TOL:
            raise DimensionError(f"theta norm {np.linalg.norm(theta):.6g} exceeds 1")
        if noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        self.d, self.n, self.T = int(d), int(n), int(T)
        self.theta = theta
        self.noise_sd = float(noise_sd)

    def contexts(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def means(self, t: int) -> np.ndarray:
        return self.contexts(t) @ self.theta

    def describe(self) -> dict:
        return {"kind": self.kind, "d": self.d, "n": self.n, "T": self.T}

    def _check_round(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise IndexError(f"round {t} outside [1, {self.T}]")


class ArrayInstance(Instance):
    """Instance backed by an explicit context array.

    ``contexts`` is either ``(n, d)`` (repeated every round) or ``(T, n, d)``.
    """

    kind = "array"

    def __init__(self, theta, contexts, T: Optional[int] = None, noise_sd: float = 1.0):
        C = np.asarray(contexts, dtype=np.float64)
        if C.ndim == 2:
            if T is None:
                raise ValueError("T is required for a repeated context set")
            check_context_set(C)
            n, d = C.shape
        elif C.ndim == 3:
            T = C.shape[0] if T is None else T
            if C.shape[0] != T:
                raise DimensionError("context array length does not match T")
            for X in C:
                check_context_set(X)
            n, d = C.shape[1:]
        else:
            raise DimensionError("contexts must be (n, d) or (T, n, d)")
        super().__init__(d, n, T, theta, noise_sd)
        self._C = C

    def contexts(self, t: int) -> np.ndarray:
        self._check_round(t)
        return self._C if self._C.ndim == 2 else self._C[t - 1]


class RandomInstance(Instance):
    """Unit-norm θ and i.i.d. uniform unit-sphere contexts, all from one seed.

    Contexts are generated in blocks of ``BLOCK`` rounds, each block from its
    own seed, so ``contexts(t)`` does not depend on which rounds were asked for
    earlier.
    """

    kind = "random"
    BLOCK = 512

    def __init__(self, d: int, n: int, T: int, theta_seed: int, noise_sd: float = 1.0,
                 theta=None):
        self.theta_seed = int(theta_seed)
        if theta is None:
            theta = _unit_rows(make_rng(mix_seed(self.theta_seed, 0)), 1, d)[0]
        super().__init__(d, n, T, theta, noise_sd)
        self._block_id = -1
        self._block = None

    def contexts(self, t: int) -> np.ndarray:
        self._check_round(t)
        b, off = divmod(t - 1, self.BLOCK)
        if b != self._block_id:
            rng = make_rng(mix_seed(self.theta_seed, 1, b))
            rows = _unit_rows(rng, self.BLOCK * self.n, self.d)
            self._block = rows.reshape(self.BLOCK, self.n, self.d)
            self._block_id = b
        return self._block[off]

    def describe(self) -> dict:
        out = super().describe()
        out.update(theta_seed=self.theta_seed, noise_sd=self.noise_sd)
        return out


def _unit_rows(rng: np.random.Generator, m: int, d: int) -> np.ndarray:
    g = rng.standard_normal((m, d))
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    return g / nrm


# --------------------------------------------------------------------------
# Regret and rewards
# --------------------------------------------------------------------------

def instantaneous_regret(contexts, theta, chosen: int) -> float:
    """``max_i xᵢᵀθ − x_chosenᵀθ`` for one round."""
    X = np.asarray(contexts, dtype=np.float64)
    if not 0 <= chosen < X.shape[0]:
        raise IndexError(f"arm {chosen} out of range for {X.shape[0]} arms")
    means = X @ np.asarray(theta, dtype=np.float64)
    return max(0.0, float(means.max() - means[chosen]))


def sample_reward(instance: Instance, x, rng: np.random.Generator) -> float:
    """Noisy reward ``xᵀθ + ε`` with ``ε ~ N(0, noise_sd²)``."""
    mean = float(np.asarray(x, dtype=np.float64) @ instance.theta)
    if instance.noise_sd == 0.0:
        return mean
    return mean + instance.noise_sd * float(rng.standard_normal())


@dataclass
class RegretTrace:
    """Per-round pseudo-regret path of one simulation."""

    T: int
    cum_regret: np.ndarray
    chosen: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1])


Observer = Callable[[int, np.ndarray, int, object], None]


def simulate(policy, instance: Instance, seed: int,
             observer: Optional[Observer] = None) -> RegretTrace:
    """Run ``T`` rounds of select / reward / update and record pseudo-regret.

    The policy is reset with ``mix_seed(seed, 0)`` and the reward noise is
    drawn from ``mix_seed(seed, 1)``, so the trace is a pure function of
    ``(policy type, instance, seed)``. ``observer(t, contexts, chosen,
    policy)`` is called after each select, before the update.
    """
    d, n, T = instance.d, instance.n, instance.T
    policy.reset(d, n, T, mix_seed(seed, 0))
    noise = make_rng(mix_seed(seed, 1)).standard_normal(T) * instance.noise_sd
    theta = instance.theta

    inst = np.empty(T)
    chosen = np.empty(T, dtype=np.int64)
    zetas = None
    for t in range(1, T + 1):
        X = instance.contexts(t)
        i = policy.select(X)
        if not isinstance(i, (int, np.integer)) or not 0 <= i < n:
            raise ProtocolError(f"policy returned invalid arm {i!r} at round {t}")
        i = int(i)
        if observer is not None:
            observer(t, X, i, policy)
        means = X @ theta
        inst[t - 1] = max(0.0, means.max() - means[i])
        chosen[t - 1] = i
        policy.update(i, means[i] + noise[t - 1])
        z = getattr(policy, "last_zeta", None)
        if z is not None or zetas is not None:
            if zetas is None:
                zetas = np.full(T, -1, dtype=np.int64)
            zetas[t - 1] = -1 if z is None else z

    diagnostics = {}
    if zetas is not None:
        diagnostics["zeta"] = zetas
    return RegretTrace(T=T, cum_regret=np.cumsum(inst), chosen=chosen, diagnostics=diagnostics)

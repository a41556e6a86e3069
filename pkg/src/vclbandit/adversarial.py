"""Hard instance families for linear contextual bandits.

The building blocks are

* a *schedule* ``z_1..z_T`` with ``S_t = (1 + c)^t``, ``c = eps·ln T/(4T)`` and
  ``z_t = √(c·S_{t-1})``, so that ``S_t = 1 + Σ_{j≤t} z_j²``;
* *stages*: stage ``j`` covers rounds ``(t_{j-1}, t_j]`` where ``t_j`` is the
  last round with ``S_t ≤ 9^j`` (the final stage is cut at ``T``);
* a Cantor-style *interval tree* rooted at ``[1/3, 2/3]`` whose leaves carry
  the hidden parameters ``γ``.

In dimension 2 the hidden vector is ``(γ_u, 1/2)``. During stage ``j`` arm 0
plays ``(z_t, 0)`` and arm 1 plays ``(0, (α+β)·z_t)``, where ``[α, β]`` is the
depth ``j-1`` ancestor interval of leaf ``u``. The general construction is the
product of ``d/2`` such pairs with ``2^{d/2}`` arms (bit ``s`` of the arm index
picks the option in group ``s``), rescaled by ``√d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .core import Instance, make_rng, mix_seed
from .errors import ConstructionError

NORM_SLACK = 1e-12


# --------------------------------------------------------------------------
# Schedule and stages
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ZtSchedule:
    T: int
    eps: float
    S: np.ndarray
    z: np.ndarray

    @property
    def rate(self) -> float:
        """Per-round growth ``c`` with ``S_t = (1+c)^t``."""
        return self.eps * math.log(self.T) / (4.0 * self.T)

    def tight_target(self) -> float:
        """Closed form of ``Σ_t z_t / √S_{t-1}``, i.e. ``√(eps·T·ln T / 4)``."""
        return math.sqrt(self.eps * self.T * math.log(self.T) / 4.0)


def zt_schedule(T: int, eps: float = 2.0) -> ZtSchedule:
    if int(T) != T or T < 1:
        raise ValueError(f"horizon must be a positive integer, got {T!r}")
    if not 0.0 < eps <= 2.0:
        raise ValueError(f"eps must lie in (0, 2], got {eps!r}")
    T = int(T)
    c = eps * math.log(T) / (4.0 * T)
    S = np.exp(np.arange(T + 1) * math.log1p(c))
    z = np.sqrt(c * S[:-1])
    return ZtSchedule(T=T, eps=float(eps), S=S, z=z)


@dataclass(frozen=True, eq=False)
class StagePartition:
    schedule: ZtSchedule
    t_bounds: tuple

    @property
    def k(self) -> int:
        return len(self.t_bounds) - 1

    def stage_of(self, t):
        """Stage index ``j ≥ 1`` of round ``t`` (scalar or array)."""
        return np.searchsorted(np.asarray(self.t_bounds), t, side="left")

    def stage_rounds(self, j: int) -> range:
        return range(self.t_bounds[j - 1] + 1, self.t_bounds[j] + 1)


def stage_partition(schedule: ZtSchedule) -> StagePartition:
    S, T = schedule.S, schedule.T
    bounds = [0]
    j = 1
    while True:
        # S is increasing, so the last t with S_t <= 9^j is found by bisection
        tj = int(np.searchsorted(S, 9.0 ** j, side="right")) - 1
        if tj >= T:
            bounds.append(T)
            break
        if S[tj] < 0.5 * 9.0 ** j:
            raise ConstructionError(f"stage {j} ends at S={S[tj]:.6g} < 9^{j}/2")
        bounds.append(tj)
        j += 1
    return StagePartition(schedule=schedule, t_bounds=tuple(bounds))


# --------------------------------------------------------------------------
# Interval tree
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def interval(j: int, xi: int) -> tuple:
    """Exact endpoints ``(a, b)`` of node ``xi`` at depth ``j``.

    The root is ``[1/3, 2/3]``; the children of ``[a, b]`` are its outer thirds
    ``[a, (2a+b)/3]`` (bit 0) and ``[(a+2b)/3, b]`` (bit 1), read from the most
    significant bit of ``xi``.
    """
    if j < 0 or not 0 <= xi < (1 << j):
        raise IndexError(f"no interval {xi} at depth {j}")
    if j == 0:
        return (Fraction(1, 3), Fraction(2, 3))
    a, b = interval(j - 1, xi >> 1)
    if xi & 1:
        return ((a + 2 * b) / 3, b)
    return (a, (2 * a + b) / 3)


def ancestor_index(k: int, xi: int, j: int) -> int:
    """Index of the depth-``j`` ancestor of leaf ``xi`` in a depth-``k`` tree."""
    if not 0 <= j <= k:
        raise IndexError(f"depth {j} outside [0, {k}]")
    if not 0 <= xi < (1 << k):
        raise IndexError(f"leaf {xi} outside [0, 2^{k})")
    return xi >> (k - j)


def leaf_gamma(k: int, xi: int) -> Fraction:
    """Hidden parameter of leaf ``xi``: the midpoint of its interval."""
    if not 0 <= xi < (1 << k):
        raise IndexError(f"leaf {xi} outside [0, 2^{k})")
    a, b = interval(k, xi)
    return (a + b) / 2


def ancestor_pair_sum(k: int, u: int, j: int) -> Fraction:
    """``α + β`` of the depth ``j-1`` ancestor of leaf ``u``, used in stage ``j``."""
    a, b = interval(j - 1, ancestor_index(k, u, j - 1))
    return a + b


def margin_floor(T: int, eps: float = 2.0) -> float:
    """Smallest group regret of a suboptimal pull, ``√(eps ln T)/(36 √(2T))``.

    With ``eps = 2`` this is ``√(ln T)/(36 √T)``.
    """
    return math.sqrt(eps * math.log(T)) / (36.0 * math.sqrt(2.0 * T))


# --------------------------------------------------------------------------
# Parameters
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LowerBoundParams:
    d: int
    k: int
    u: tuple

    def __post_init__(self):
        if self.d < 2 or self.d % 2:
            raise ConstructionError(f"dimension must be even and >= 2, got {self.d}")
        if self.k < 0:
            raise ConstructionError("stage count must be nonnegative")
        object.__setattr__(self, "u", tuple(int(v) for v in self.u))
        if len(self.u) != self.d // 2:
            raise ConstructionError(f"need {self.d // 2} leaf indices, got {len(self.u)}")
        if any(not 0 <= v < (1 << self.k) for v in self.u):
            raise ConstructionError(f"leaf indices must lie in [0, {(1 << self.k) - 1}]")

    @property
    def groups(self) -> int:
        return self.d // 2

    def odd_coords(self) -> np.ndarray:
        """``θ_{2s-1} = γ_{u_s}/√d`` for every group."""
        return np.array([float(leaf_gamma(self.k, v)) for v in self.u]) / math.sqrt(self.d)


def sample_params(d: int, k: int, rng: np.random.Generator) -> LowerBoundParams:
    u = rng.integers(0, 1 << k, size=d // 2) if k > 0 else np.zeros(d // 2, dtype=int)
    return LowerBoundParams(d=d, k=k, u=tuple(int(v) for v in u))


# --------------------------------------------------------------------------
# Instances
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Phase:
    start: int            # rounds start+1 .. start+partition.schedule.T
    group_offset: int
    params: LowerBoundParams
    partition: StagePartition
    pair_sums: np.ndarray  # (k, groups): α+β of the stage-j ancestor, row j-1

    @property
    def length(self) -> int:
        return self.partition.schedule.T


def _make_phase(start: int, offset: int, params: LowerBoundParams,
                partition: StagePartition) -> _Phase:
    k = partition.k
    if params.k != k:
        raise ConstructionError(f"parameters built for k={params.k} but schedule has k={k}")
    if partition.schedule.T < 2:
        raise ConstructionError("horizon must be at least 2; with T=1 every gap vanishes")
    sums = np.array([[float(ancestor_pair_sum(k, u, j)) for u in params.u]
                     for j in range(1, k + 1)]).reshape(k, params.groups)
    return _Phase(start, offset, params, partition, sums)


class AdversarialInstance(Instance):
    """One member of a lower-bound family, possibly split into phases.

    Each phase owns a contiguous block of rounds and a contiguous block of
    coordinate groups; outside its block every context coordinate is 0.
    ``scale`` multiplies every context entry and divides every ``θ`` entry.
    """

    def __init__(self, kind: str, d: int, T: int, phases: Sequence[_Phase],
                 scale: float, eps: float, seed: Optional[int] = None):
        self.kind = kind
        self.phases = list(phases)
        self.scale = float(scale)
        self.eps = float(eps)
        self.seed = seed
        G = d // 2
        gpp = self.phases[0].params.groups
        n = 1 << gpp

        gamma = np.empty(G)
        for ph in self.phases:
            gamma[ph.group_offset:ph.group_offset + gpp] = [
                float(leaf_gamma(ph.params.k, v)) for v in ph.params.u]
        theta = np.empty(d)
        theta[0::2] = gamma / self.scale
        theta[1::2] = 0.5 / self.scale
        if np.linalg.norm(theta) > 1.0 + NORM_SLACK:
            raise ConstructionError(f"hidden vector norm {np.linalg.norm(theta):.6g} exceeds 1")
        super().__init__(d, n, T, theta, noise_sd=1.0)
        self.groups_per_phase = gpp
        self.bits = (np.arange(n)[:, None] >> np.arange(gpp)[None, :]) & 1

        # per-round tables over the whole horizon
        self._phase_of = np.empty(T, dtype=np.int64)
        self._zc = np.empty(T)
        self._sums = np.empty((T, gpp))
        for p, ph in enumerate(self.phases):
            sl = slice(ph.start, ph.start + ph.length)
            stage = ph.partition.stage_of(np.arange(1, ph.length + 1))
            self._phase_of[sl] = p
            self._zc[sl] = ph.partition.schedule.z * self.scale
            self._sums[sl] = ph.pair_sums[stage - 1]
        self._validate_norms()

    # -- construction checks ------------------------------------------------

    def _validate_norms(self) -> None:
        # the largest context picks, per group, the longer of the two options
        sq = self._zc ** 2 * np.sum(np.maximum(1.0, self._sums ** 2), axis=1)
        bad = np.flatnonzero(sq > 1.0 + NORM_SLACK)
        if bad.size:
            t = int(bad[0]) + 1
            raise ConstructionError(
                f"context norm {math.sqrt(sq[bad[0]]):.6g} exceeds 1 at round {t}; "
                f"the horizon is too short for d={self.d}, eps={self.eps:g}")

    # -- contexts -----------------------------------------------------------

    def contexts(self, t: int) -> np.ndarray:
        self._check_round(t)
        r = t - 1
        ph = self.phases[self._phase_of[r]]
        X = np.zeros((self.n, self.d))
        cols = 2 * (ph.group_offset + np.arange(self.groups_per_phase))
        X[:, cols] = (1 - self.bits) * self._zc[r]
        X[:, cols + 1] = self.bits * (self._sums[r] * self._zc[r])
        return X

    def group_values(self, t=None):
        """Reward contributions of the two options in every group.

        Returns ``(v0, v1)``, each of shape ``(len(t), d/2)``; entries of groups
        outside the active phase are 0. ``t`` defaults to all rounds.
        """
        rows = np.arange(self.T) if t is None else np.asarray(t, dtype=np.int64) - 1
        G = self.d // 2
        v0 = np.zeros((rows.size, G))
        v1 = np.zeros((rows.size, G))
        gpp = self.groups_per_phase
        th0, th1 = self.theta[0::2], self.theta[1::2]
        for p, ph in enumerate(self.phases):
            m = self._phase_of[rows] == p
            g = slice(ph.group_offset, ph.group_offset + gpp)
            zc = self._zc[rows[m]][:, None]
            v0[m, g] = zc * th0[g]
            v1[m, g] = (self._sums[rows[m]] * zc) * th1[g]
        return v0, v1

    def arm_bits(self, chosen, t=None) -> np.ndarray:
        """Option bit ``b_s(i)`` of each chosen arm in every group, per round."""
        rows = np.arange(self.T) if t is None else np.asarray(t, dtype=np.int64) - 1
        chosen = np.asarray(chosen, dtype=np.int64)
        G = self.d // 2
        out = np.zeros((rows.size, G), dtype=np.int64)
        local = np.arange(self.groups_per_phase)
        for p, ph in enumerate(self.phases):
            m = self._phase_of[rows] == p
            out[m, ph.group_offset:ph.group_offset + self.groups_per_phase] = \
                (chosen[m, None] >> local[None, :]) & 1
        return out

    def suboptimal_table(self, chosen) -> np.ndarray:
        """Boolean ``(T, d/2)`` table of s-suboptimal pulls along ``chosen``."""
        v0, v1 = self.group_values()
        b = self.arm_bits(chosen)
        mine = np.where(b == 1, v1, v0)
        other = np.where(b == 1, v0, v1)
        return mine < other

    def segment_regret_table(self, chosen) -> np.ndarray:
        """``(T, d/2)`` table of s-segment regrets along ``chosen``."""
        v0, v1 = self.group_values()
        b = self.arm_bits(chosen)
        return np.maximum(v0, v1) - np.where(b == 1, v1, v0)

    def stage_of(self, t: int) -> int:
        ph = self.phases[self._phase_of[t - 1]]
        return int(ph.partition.stage_of(t - ph.start))

    def describe(self) -> dict:
        return {
            "kind": self.kind, "d": self.d, "n": self.n, "T": self.T, "eps": self.eps,
            "k": [ph.params.k for ph in self.phases],
            "u": [list(ph.params.u) for ph in self.phases],
            "seed": self.seed,
        }


def _check_arm_group(inst: AdversarialInstance, t: int, i: int, s: int) -> None:
    inst._check_round(t)
    if not 0 <= i < inst.n:
        raise IndexError(f"arm {i} outside [0, {inst.n})")
    if not 0 <= s < inst.d // 2:
        raise IndexError(f"group {s} outside [0, {inst.d // 2})")


def is_s_suboptimal(instance: AdversarialInstance, t: int, i: int, s: int) -> bool:
    """True when arm ``i`` takes the lesser of the two group-``s`` options at round ``t``."""
    _check_arm_group(instance, t, i, s)
    v0, v1 = instance.group_values([t])
    b = instance.arm_bits([i], [t])[0, s]
    mine, other = (v1[0, s], v0[0, s]) if b else (v0[0, s], v1[0, s])
    return bool(mine < other)


def s_segment_regret(instance: AdversarialInstance, t: int, i: int, s: int) -> float:
    """Group-``s`` share of the regret of arm ``i`` at round ``t``."""
    _check_arm_group(instance, t, i, s)
    v0, v1 = instance.group_values([t])
    b = instance.arm_bits([i], [t])[0, s]
    return float(max(v0[0, s], v1[0, s]) - (v1[0, s] if b else v0[0, s]))


def instance_d2(u: int, schedule: ZtSchedule) -> AdversarialInstance:
    """Two-armed instance ``B^(u)`` with unscaled contexts."""
    part = stage_partition(schedule)
    params = LowerBoundParams(d=2, k=part.k, u=(u,))
    phase = _make_phase(0, 0, params, part)
    return AdversarialInstance("adversarial_d2", 2, schedule.T, [phase], 1.0, schedule.eps)


def instance_general(params: LowerBoundParams, schedule: ZtSchedule) -> AdversarialInstance:
    """Product of ``d/2`` two-option groups with ``2^{d/2}`` arms, scaled by ``√d``."""
    part = stage_partition(schedule)
    phase = _make_phase(0, 0, params, part)
    return AdversarialInstance("adversarial_general", params.d, schedule.T, [phase],
                               math.sqrt(params.d), schedule.eps)


def instance_phased(n: int, d: int, T: int, eps: float = 2.0, seed: int = 0,
                    params: Optional[Sequence[LowerBoundParams]] = None) -> AdversarialInstance:
    """Split the horizon into ``d / (2 log₂ n)`` phases, one coordinate block each.

    Phase ``p`` covers rounds ``(⌊T p w/d⌋, ⌊T (p+1) w/d⌋]`` with ``w = 2 log₂ n``
    and runs the general construction on coordinates ``[p w, (p+1) w)``. The
    leaf parameters of phase ``p`` are drawn from ``mix_seed(seed, p)`` unless
    ``params`` is given.
    """
    if n < 2 or n & (n - 1):
        raise ConstructionError(f"number of arms must be a power of 2 and >= 2, got {n}")
    w = 2 * (n.bit_length() - 1)
    if d < w or d % w:
        raise ConstructionError(f"d={d} must be a positive multiple of 2·log2(n)={w}")
    phases_n = d // w
    edges = [T * p * w // d for p in range(phases_n + 1)]
    min_len = min(b - a for a, b in zip(edges, edges[1:]))
    need = max(2.0, (w // 2) ** (2.0 + eps))
    if min_len < need:
        raise ConstructionError(f"phase length {min_len} below (log2 n)^(2+eps) = {need:.4g}")
    if params is not None and len(params) != phases_n:
        raise ConstructionError(f"need {phases_n} parameter sets, got {len(params)}")

    phases = []
    for p in range(phases_n):
        part = stage_partition(zt_schedule(edges[p + 1] - edges[p], eps))
        if params is None:
            prm = sample_params(w, part.k, make_rng(mix_seed(seed, p)))
        else:
            prm = params[p]
        phases.append(_make_phase(edges[p], p * (w // 2), prm, part))
    return AdversarialInstance("phased", d, T, phases, math.sqrt(d), eps, seed=seed)


def instance_from_description(desc: dict) -> AdversarialInstance:
    """Rebuild an instance from :meth:`AdversarialInstance.describe` output."""
    kind, d, T, eps = desc["kind"], int(desc["d"]), int(desc["T"]), float(desc["eps"])
    if kind == "adversarial_d2":
        return instance_d2(int(desc["u"][0][0]), zt_schedule(T, eps))
    if kind == "adversarial_general":
        sched = zt_schedule(T, eps)
        return instance_general(LowerBoundParams(d, int(desc["k"][0]), desc["u"][0]), sched)
    if kind == "phased":
        n = int(desc["n"])
        prms = [LowerBoundParams(2 * (n.bit_length() - 1), int(k), u)
                for k, u in zip(desc["k"], desc["u"])]
        return instance_phased(n, d, T, eps, seed=desc.get("seed") or 0, params=prms)
    raise ValueError(f"unknown instance kind {kind!r}")


# --------------------------------------------------------------------------
# Distinguishability
# --------------------------------------------------------------------------

def shared_stage(U: LowerBoundParams, V: LowerBoundParams) -> int:
    """Largest stage ``j`` through which ``B^(U)`` and ``B^(V)`` show identical contexts.

    Contexts of stage ``j`` depend on depth ``j-1`` ancestors, so the answer is
    one more than the deepest depth at which every group's ancestors agree,
    capped at ``k``.
    """
    if (U.d, U.k) != (V.d, V.k):
        raise ValueError("parameters must share d and k")
    k = U.k
    deepest = k
    for a, b in zip(U.u, V.u):
        m = k
        while m > 0 and (a >> (k - m)) != (b >> (k - m)):
            m -= 1
        deepest = min(deepest, m)
    return min(k, deepest + 1)


def kl_upper_bound(U: LowerBoundParams, V: LowerBoundParams, t: int,
                   schedule: ZtSchedule) -> float:
    """``(d/2)·(Σ_s |θ^U_{2s-1} − θ^V_{2s-1}|)²·S_t``.

    Bounds the KL divergence between the reward histories up to round ``t``
    under ``U`` and ``V``, valid while both instances show the same contexts.
    Callers turn it into an event-probability gap via ``√(KL/2)``.
    """
    part = stage_partition(schedule)
    if U.k != part.k:
        raise ValueError(f"parameters built for k={U.k} but schedule has k={part.k}")
    j = shared_stage(U, V)
    limit = part.t_bounds[j] if U != V else schedule.T
    if not 1 <= t <= limit:
        raise ValueError(f"round {t} lies past the shared stage boundary t_{j} = {limit}")
    gap = float(np.sum(np.abs(U.odd_coords() - V.odd_coords())))
    return (U.d / 2.0) * gap * gap * float(schedule.S[t])


def exact_kl_path(inst_u: AdversarialInstance, inst_v: AdversarialInstance,
                  chosen) -> np.ndarray:
    """Cumulative ``½ Σ_{t'≤t} (x_{i_t'}ᵀ(θ^U − θ^V))²`` along a pull history.

    Uses the contexts of ``inst_u``; the value is the KL divergence between
    the two reward histories only while their contexts coincide.
    """
    chosen = np.asarray(chosen, dtype=np.int64)
    dtheta = inst_u.theta - inst_v.theta
    dmu = np.array([inst_u.contexts(t)[i] @ dtheta for t, i in enumerate(chosen, start=1)])
    return 0.5 * np.cumsum(dmu * dmu)

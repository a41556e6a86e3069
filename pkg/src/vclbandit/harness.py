"""Monte Carlo experiment orchestration.

An experiment is described by an :class:`ExperimentConfig`. Replication ``r``
is simulated with seed ``mix_seed(base_seed, r)``; instances whose leaf
parameters are ``"sample"`` draw them from ``mix_seed(base_seed, r, 1)``.
Rows come back ordered by replication and checkpoint whatever the number of
worker processes, so output files are byte-identical across runs.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .adversarial import (
    LowerBoundParams,
    instance_d2,
    instance_general,
    instance_phased,
    margin_floor,
    sample_params,
    stage_partition,
    zt_schedule,
)
from .core import RandomInstance, make_rng, mix_seed, simulate
from .errors import ConfigError
from .policies import POLICIES, make_policy

CSV_HEADER = ["replication", "seed", "checkpoint", "cum_regret", "subopt_pulls", "zeta_hist"]

_INSTANCE_KEYS = {
    "random": ({"kind", "d", "n", "T", "theta_seed"}, {"noise_sd"}),
    "adversarial_d2": ({"kind", "T", "u"}, {"eps"}),
    "adversarial_general": ({"kind", "d", "T", "U"}, {"eps"}),
    "phased": ({"kind", "n", "d", "T"}, {"eps"}),
}
_CONFIG_KEYS = {"policy", "instance", "replications", "base_seed", "output_path", "checkpoints"}


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    policy: str
    instance: dict
    replications: int = 1
    base_seed: int = 0
    output_path: Optional[str] = None
    checkpoints: Optional[list] = None

    @classmethod
    def from_dict(cls, raw: dict, allow_horizon_list: bool = False) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        for key in ("policy", "instance"):
            if key not in raw:
                raise ConfigError(f"missing required key {key!r}")
        cfg = cls(
            policy=raw["policy"],
            instance=copy.deepcopy(raw["instance"]),
            replications=raw.get("replications", 1),
            base_seed=raw.get("base_seed", 0),
            output_path=raw.get("output_path"),
            checkpoints=raw.get("checkpoints"),
        )
        cfg.validate(allow_horizon_list)
        return cfg

    @classmethod
    def from_json(cls, path: str, allow_horizon_list: bool = False) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from None
        return cls.from_dict(raw, allow_horizon_list)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy, "instance": copy.deepcopy(self.instance),
            "replications": self.replications, "base_seed": self.base_seed,
            "output_path": self.output_path, "checkpoints": self.checkpoints,
        }

    @property
    def horizon(self) -> int:
        return int(self.instance["T"])

    def validate(self, allow_horizon_list: bool = False) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {sorted(POLICIES)}, got {self.policy!r}")
        if not _is_int(self.replications) or self.replications < 1:
            raise ConfigError("replications must be a positive integer")
        if not _is_int(self.base_seed):
            raise ConfigError("base_seed must be an integer")
        if self.output_path is not None and not isinstance(self.output_path, str):
            raise ConfigError("output_path must be a string")
        inst = self.instance
        if not isinstance(inst, dict) or "kind" not in inst:
            raise ConfigError("instance must be an object with a 'kind' field")
        if inst["kind"] not in _INSTANCE_KEYS:
            raise ConfigError(f"instance kind must be one of {sorted(_INSTANCE_KEYS)}")
        required, optional = _INSTANCE_KEYS[inst["kind"]]
        missing = required - set(inst)
        unknown = set(inst) - required - optional
        if missing:
            raise ConfigError(f"instance is missing keys: {sorted(missing)}")
        if unknown:
            raise ConfigError(f"unknown instance keys: {sorted(unknown)}")
        for key in ("d", "n", "theta_seed"):
            if key in inst and not _is_int(inst[key]):
                raise ConfigError(f"instance.{key} must be an integer")
        for key in ("d", "n"):
            if key in inst and inst[key] < 1:
                raise ConfigError(f"instance.{key} must be positive")
        if "eps" in inst and not (isinstance(inst["eps"], (int, float)) and 0 < inst["eps"] <= 2):
            raise ConfigError("instance.eps must lie in (0, 2]")
        if "noise_sd" in inst and not (isinstance(inst["noise_sd"], (int, float)) and inst["noise_sd"] >= 0):
            raise ConfigError("instance.noise_sd must be a nonnegative number")
        if inst["kind"] == "adversarial_d2" and not (inst["u"] == "sample" or _is_int(inst["u"])):
            raise ConfigError("instance.u must be an integer or \"sample\"")
        if inst["kind"] == "adversarial_general" and not (
                inst["U"] == "sample" or (isinstance(inst["U"], list) and all(_is_int(v) for v in inst["U"]))):
            raise ConfigError("instance.U must be a list of integers or \"sample\"")

        T = inst["T"]
        horizons = T if (allow_horizon_list and isinstance(T, list)) else [T]
        if allow_horizon_list and not isinstance(T, list):
            raise ConfigError("a sweep needs instance.T to be a list of horizons")
        if not horizons or not all(_is_int(h) and h >= 1 for h in horizons):
            raise ConfigError("instance.T must be a positive integer")
        if self.checkpoints is not None:
            cp = self.checkpoints
            if not isinstance(cp, list) or not cp or not all(_is_int(c) and c >= 1 for c in cp):
                raise ConfigError("checkpoints must be a non-empty list of positive integers")
            if cp != sorted(set(cp)):
                raise ConfigError("checkpoints must be strictly increasing")
            if cp[-1] > min(horizons):
                raise ConfigError("checkpoints must not exceed T")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def default_checkpoints(T: int) -> list:
    """Powers of two below ``T``, then ``T`` itself."""
    cps = []
    p = 1
    while p < T:
        cps.append(p)
        p *= 2
    cps.append(T)
    return cps


def build_instance(desc: dict, base_seed: int = 0, replication: int = 0):
    """Instantiate the problem described by a validated instance description."""
    kind = desc["kind"]
    T = int(desc["T"])
    eps = float(desc.get("eps", 2.0))
    draw_seed = mix_seed(base_seed, replication, 1)
    if kind == "random":
        return RandomInstance(desc["d"], desc["n"], T, desc["theta_seed"],
                              noise_sd=float(desc.get("noise_sd", 1.0)))
    if kind == "adversarial_d2":
        sched = zt_schedule(T, eps)
        u = desc["u"]
        if u == "sample":
            k = stage_partition(sched).k
            u = sample_params(2, k, make_rng(draw_seed)).u[0]
        return instance_d2(int(u), sched)
    if kind == "adversarial_general":
        sched = zt_schedule(T, eps)
        d = int(desc["d"])
        k = stage_partition(sched).k
        if desc["U"] == "sample":
            params = sample_params(d, k, make_rng(draw_seed))
        else:
            params = LowerBoundParams(d, k, tuple(desc["U"]))
        return instance_general(params, sched)
    if kind == "phased":
        return instance_phased(int(desc["n"]), int(desc["d"]), T, eps, seed=draw_seed)
    raise ConfigError(f"unknown instance kind {kind!r}")


# --------------------------------------------------------------------------
# Running
# --------------------------------------------------------------------------

@dataclass
class ResultRow:
    replication: int
    seed: int
    checkpoint: int
    cum_regret: float
    subopt_pulls: Optional[int] = None
    zeta_hist: str = ""

    def csv_fields(self) -> list:
        return [str(self.replication), str(self.seed), str(self.checkpoint),
                fmt_float(self.cum_regret),
                "" if self.subopt_pulls is None else str(self.subopt_pulls),
                self.zeta_hist]


def _replicate(args) -> list:
    cfg_dict, r = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    seed = mix_seed(cfg.base_seed, r)
    inst = build_instance(cfg.instance, cfg.base_seed, r)
    policy = make_policy(cfg.policy)
    trace = simulate(policy, inst, seed)
    cps = cfg.checkpoints or default_checkpoints(inst.T)

    subopt = None
    if hasattr(inst, "suboptimal_table"):
        subopt = np.cumsum(inst.suboptimal_table(trace.chosen).sum(axis=1))
    zetas = trace.diagnostics.get("zeta") if cfg.policy == "vcl" else None

    rows = []
    for c in cps:
        hist = ""
        if zetas is not None:
            counts = np.bincount(zetas[:c], minlength=policy.zeta0 + 1)
            hist = ";".join(str(int(v)) for v in counts)
        rows.append(ResultRow(r, seed, c, float(trace.cum_regret[c - 1]),
                              None if subopt is None else int(subopt[c - 1]), hist))
    return rows


def _map(fn, items, jobs: Optional[int]):
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def run_experiment(config: ExperimentConfig, jobs: Optional[int] = None,
                   write: bool = True) -> list:
    """Simulate every replication and return rows ordered by (replication, checkpoint).

    Construction problems surface as :class:`ConstructionError` before any
    worker starts. With ``write`` and an ``output_path`` the rows are written
    as CSV.
    """
    config.validate()
    build_instance(config.instance, config.base_seed, 0)
    cfg_dict = config.to_dict()
    per_rep = _map(_replicate, [(cfg_dict, r) for r in range(config.replications)], jobs)
    rows = [row for rep in per_rep for row in rep]
    if write and config.output_path:
        write_csv(rows, config.output_path)
    return rows


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.csv_fields())
    return buf.getvalue()


def write_csv(rows: Sequence[ResultRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


def read_csv(path: str) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [ResultRow(int(r["replication"]), int(r["seed"]), int(r["checkpoint"]),
                          float(r["cum_regret"]),
                          int(r["subopt_pulls"]) if r["subopt_pulls"] else None,
                          r["zeta_hist"]) for r in reader]


class Aggregate(NamedTuple):
    checkpoint: int
    mean: float
    std_error: float
    count: int


def aggregate(rows: Sequence[ResultRow]) -> list:
    """Mean and standard error of cumulative regret at every checkpoint."""
    by_cp = {}
    for row in rows:
        by_cp.setdefault(row.checkpoint, []).append(row.cum_regret)
    out = []
    for cp in sorted(by_cp):
        v = np.asarray(by_cp[cp])
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        out.append(Aggregate(cp, float(v.mean()), se, int(v.size)))
    return out


# --------------------------------------------------------------------------
# Scaling
# --------------------------------------------------------------------------

class ScalingFit(NamedTuple):
    slope: float
    intercept: float
    residual: float

    @property
    def defined(self) -> bool:
        return not math.isnan(self.slope)


UNDEFINED_FIT = ScalingFit(math.nan, math.nan, math.nan)


def fit_scaling_exponent(points) -> ScalingFit:
    """Least-squares line through ``(log T, log regret)``.

    ``residual`` is the sum of squared residuals in log space. Returns
    :data:`UNDEFINED_FIT` when fewer than two points are given or any value
    is nonpositive.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 2 or np.any(pts <= 0) or np.unique(pts[:, 0]).size < 2:
        return UNDEFINED_FIT
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return ScalingFit(float(coef[0]), float(coef[1]), float(res @ res))


@dataclass
class ScalingTable:
    policy: str
    rows: list                 # (T, mean regret, std error)
    fit: ScalingFit
    raw: dict = field(default_factory=dict)   # T -> list of ResultRow

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "mean_regret", "std_error"])
        for T, m, se in self.rows:
            w.writerow([T, fmt_float(m), fmt_float(se)])
        return buf.getvalue()

    def slope_text(self) -> str:
        if not self.fit.defined:
            return "slope=undefined"
        return f"slope={self.fit.slope:.6f} intercept={self.fit.intercept:.6f} residual={self.fit.residual:.3e}"


def sweep(config: ExperimentConfig, horizons: Optional[Sequence[int]] = None,
          jobs: Optional[int] = None) -> ScalingTable:
    """Run ``config`` once per horizon and fit the log-log growth exponent."""
    if horizons is None:
        horizons = config.instance["T"]
    horizons = [int(h) for h in horizons]
    if len(horizons) < 3:
        raise ConfigError("a sweep needs at least three horizons")
    table, raw = [], {}
    for T in horizons:
        cfg = copy.deepcopy(config)
        cfg.instance["T"] = T
        cfg.checkpoints = [T]
        cfg.output_path = None
        rows = run_experiment(cfg, jobs=jobs, write=False)
        agg = aggregate(rows)[-1]
        table.append((T, agg.mean, agg.std_error))
        raw[T] = rows
    fit = fit_scaling_exponent([(T, m) for T, m, _ in table])
    return ScalingTable(config.policy, table, fit, raw)


# --------------------------------------------------------------------------
# Lower-bound evaluation
# --------------------------------------------------------------------------

@dataclass
class LowerBoundSample:
    sample: int
    seed: int
    u: tuple
    pulls_per_group: tuple
    regret: float
    floor: float

    @property
    def pulls(self) -> int:
        return int(sum(self.pulls_per_group))


@dataclass
class LowerBoundSummary:
    policy: str
    d: int
    T: int
    eps: float
    samples: list

    @property
    def mean_pulls(self) -> float:
        return float(np.mean([s.pulls for s in self.samples]))

    @property
    def mean_pulls_per_group(self) -> float:
        return self.mean_pulls / (self.d // 2)

    @property
    def reference_per_group(self) -> float:
        return self.T / 4.0

    @property
    def mean_regret(self) -> float:
        return float(np.mean([s.regret for s in self.samples]))

    @property
    def floor_holds(self) -> bool:
        return all(s.regret >= s.floor for s in self.samples)

    def to_text(self) -> str:
        return "\n".join([
            f"policy {self.policy}  d={self.d}  T={self.T}  eps={self.eps:g}  samples={len(self.samples)}",
            f"mean suboptimal pulls per group  {self.mean_pulls_per_group:.2f}  (T/4 = {self.reference_per_group:.2f})",
            f"mean suboptimal pulls / T        {self.mean_pulls / self.T:.4f}",
            f"mean regret                      {self.mean_regret:.6g}",
            f"per-pull floor                   {margin_floor(self.T, self.eps):.6g}",
            f"regret >= pulls x floor          {self.floor_holds}",
        ])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample", "seed", "u", "subopt_pulls", "regret", "floor"])
        for s in self.samples:
            w.writerow([s.sample, s.seed, ";".join(map(str, s.u)), s.pulls,
                        fmt_float(s.regret), fmt_float(s.floor)])
        return buf.getvalue()


def lowerbound_instance(d: int, T: int, eps: float, base_seed: int, sample: int):
    sched = zt_schedule(T, eps)
    k = stage_partition(sched).k
    params = sample_params(d, k, make_rng(mix_seed(base_seed, sample, 1)))
    if d == 2:
        return instance_d2(params.u[0], sched)
    return instance_general(params, sched)


def _lowerbound_one(args) -> LowerBoundSample:
    policy, d, T, eps, base_seed, r = args
    inst = lowerbound_instance(d, T, eps, base_seed, r)
    seed = mix_seed(base_seed, r)
    trace = simulate(make_policy(policy), inst, seed)
    pulls = inst.suboptimal_table(trace.chosen).sum(axis=0)
    u = tuple(u for ph in inst.phases for u in ph.params.u)
    return LowerBoundSample(r, seed, u, tuple(int(p) for p in pulls), trace.final_regret,
                            int(pulls.sum()) * margin_floor(T, eps))


def lowerbound_eval(policy: str, d: int, T: int, eps: float = 2.0, samples: int = 100,
                    base_seed: int = 0, jobs: Optional[int] = None) -> LowerBoundSummary:
    """Average suboptimal-pull counts of ``policy`` over uniformly drawn hard instances."""
    if policy not in POLICIES:
        raise ConfigError(f"policy must be one of {sorted(POLICIES)}")
    if d < 2 or d % 2:
        raise ConfigError("d must be even and at least 2")
    if not 0 < eps <= 2:
        raise ConfigError("eps must lie in (0, 2]")
    if samples < 1:
        raise ConfigError("samples must be positive")
    # surface construction errors before spawning workers
    lowerbound_instance(d, T, eps, base_seed, 0)
    out = _map(_lowerbound_one, [(policy, d, T, eps, base_seed, r) for r in range(samples)], jobs)
    return LowerBoundSummary(policy, d, T, eps, out)

"""Elliptical potential sums and the schedule that makes them tight."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .adversarial import ZtSchedule, zt_schedule
from .design import DesignState
from .errors import DimensionError

REL_TOL = 1e-9


@dataclass
class PotentialReport:
    T: int
    per_term: np.ndarray
    sum_quadratic: float
    sum_sqrt: float
    two_logdet: float
    tight_target: Optional[float] = None
    schedule: Optional[ZtSchedule] = None

    @property
    def bound_holds(self) -> bool:
        return self.sum_quadratic <= self.two_logdet + REL_TOL

    def tight_ok(self) -> bool:
        """Sum of square roots equals the closed form and every term equals the growth rate.

        With ``eps = 2`` the rate is ``ln T / (2T)`` and the target ``√(T ln T / 2)``.
        """
        if self.tight_target is None:
            return False
        if self.T == 1:
            return self.sum_sqrt == 0.0 and self.tight_target == 0.0
        per = self.schedule.rate
        return (_rel(self.sum_sqrt, self.tight_target) <= REL_TOL
                and bool(np.all(np.abs(self.per_term - per) <= REL_TOL * per))
                and bool(np.all((self.schedule.z >= 0) & (self.schedule.z < 1))))

    def to_text(self) -> str:
        lines = [
            f"T              {self.T}",
            f"sum_quadratic  {self.sum_quadratic:.12g}",
            f"two_logdet     {self.two_logdet:.12g}",
            f"sum_sqrt       {self.sum_sqrt:.12g}",
        ]
        if self.tight_target is not None:
            lines.append(f"tight_target   {self.tight_target:.12g}")
        lines.append(f"bound_holds    {self.bound_holds}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        """Rows ``t, z_t, S_t, per_term``; needs a report built from a schedule."""
        if self.schedule is None:
            raise ValueError("CSV rows need a schedule-based report")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "z_t", "S_t", "per_term"])
        for t in range(1, self.T + 1):
            w.writerow([t, _g(self.schedule.z[t - 1]), _g(self.schedule.S[t]),
                        _g(self.per_term[t - 1])])
        return buf.getvalue()


def _g(x: float) -> str:
    return format(float(x), ".17g")


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def elliptical_report(vectors) -> PotentialReport:
    """Fold ``y_1..y_T`` through ``U_t = U_{t-1} + y_t y_tᵀ`` from ``U_0 = I``."""
    Y = np.asarray(vectors, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] == 0:
        raise DimensionError(f"expected a non-empty (T, d) array, got shape {Y.shape}")
    norms = np.linalg.norm(Y, axis=1)
    if np.any(norms > 1.0 + 1e-12):
        bad = int(np.argmax(norms > 1.0 + 1e-12))
        raise DimensionError(f"vector {bad + 1} has norm {norms[bad]:.6g} > 1")

    state = DesignState(Y.shape[1])
    per = np.empty(Y.shape[0])
    for t, y in enumerate(Y):
        per[t] = state.rank_one_update(y, 0.0)
    return PotentialReport(
        T=Y.shape[0],
        per_term=per,
        sum_quadratic=float(per.sum()),
        sum_sqrt=float(np.sqrt(per).sum()),
        two_logdet=2.0 * state.log_det(),
    )


def tightness_report(T: int, eps: float = 2.0) -> PotentialReport:
    """Run the one-dimensional schedule through :func:`elliptical_report`."""
    sched = zt_schedule(T, eps)
    rep = elliptical_report(sched.z[:, None])
    rep.tight_target = sched.tight_target()
    rep.schedule = sched
    return rep

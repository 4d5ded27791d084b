"""KKT residuals of the time-sharing / capacity problem at a primal-dual point."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Allocation, Scenario
from .scalarfn import f_prime, g, g_inv

BOUND_TOL = 1e-9


@dataclass(frozen=True)
class DualPoint:
    """Time-sharing multiplier ``lam`` (W) and capacity multiplier ``mu`` (J/cycle)."""

    lam: float
    mu: float = 0.0

    def __post_init__(self):
        if not (self.lam >= 0 and self.mu >= 0):
            raise ValueError(f"multipliers must be nonnegative, got {self.lam!r}, {self.mu!r}")

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu}

    @classmethod
    def from_dict(cls, d: dict) -> "DualPoint":
        return cls(float(d["lambda"]), float(d.get("mu", 0.0)))


@dataclass(frozen=True)
class KKTReport:
    stationarity_ell: float
    stationarity_t: float
    slackness_time: float
    slackness_capacity: float
    worst_user: int | None

    @property
    def max(self) -> float:
        return max(self.stationarity_ell, self.stationarity_t,
                   self.slackness_time, self.slackness_capacity)

    def to_dict(self) -> dict:
        return {
            "stationarity_ell": self.stationarity_ell,
            "stationarity_t": self.stationarity_t,
            "slackness_time": self.slackness_time,
            "slackness_capacity": self.slackness_capacity,
            "worst_user": self.worst_user,
            "max": self.max,
        }


def kkt_residual(s: Scenario, a: Allocation, d: DualPoint) -> KKTReport:
    """Scale-free violations of the optimality conditions.

    The bit derivative  beta f'(l/t)/h2 - beta C (P - mu)  must be >= 0 at
    the minimum offload, <= 0 at full offload and vanish in between; the
    time derivative  beta g(l/t)/h2 + lam  must vanish for every user with
    t > 0.  Users with t = 0 are tested at the rate implied by ``lam``.
    Each term is divided by the sum of magnitudes it is built from, and
    the complementary-slackness gaps by T and F.
    """
    rc = s.sys.rc
    beta, C, P, h2, R = (s.column(n) for n in ("beta", "C", "P", "h2", "R"))
    m = s.min_offloads()
    ell = np.asarray(a.ell, dtype=float)
    t = np.asarray(a.t, dtype=float)
    lam, mu = d.lam, d.mu

    busy = t > 0
    x = np.zeros_like(ell)
    x[busy] = ell[busy] / t[busy]
    if lam > 0 and np.any(~busy):
        x[~busy] = g_inv(-lam * h2[~busy] / beta[~busy], rc)

    fp = np.asarray(f_prime(x, rc), dtype=float)
    dl = beta * (fp / h2 - C * (P - mu))
    scale_l = beta * (fp / h2 + C * P)
    at_lo = ell - m <= BOUND_TOL * R
    at_hi = R - ell <= BOUND_TOL * R
    viol_l = np.where(at_lo & at_hi, 0.0,
                      np.where(at_lo, np.maximum(-dl, 0.0),
                               np.where(at_hi, np.maximum(dl, 0.0), np.abs(dl))))
    viol_l = viol_l / scale_l

    gx = np.asarray(g(x, rc), dtype=float)
    dt = beta * gx / h2 + lam
    scale_t = beta * np.abs(gx) / h2 + lam
    viol_t = np.zeros_like(dt)
    nz = busy & (scale_t > 0)
    viol_t[nz] = np.abs(dt[nz]) / scale_t[nz]

    T = s.sys.slot_T
    slack_time = abs(float(t.sum()) - T) / T if lam > 0 else 0.0
    if mu > 0:
        if s.sys.finite_cloud:
            F = s.sys.cloud_F
            slack_cap = abs(float(np.dot(C, ell)) - F) / F
        else:
            slack_cap = math.inf
    else:
        slack_cap = 0.0

    per_user = np.maximum(viol_l, viol_t)
    worst = int(np.argmax(per_user)) if per_user.size and per_user.max() > 0 else None
    return KKTReport(float(viol_l.max()), float(viol_t.max()), slack_time, slack_cap, worst)

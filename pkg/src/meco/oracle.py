"""Brute-force reference minimiser for small cells, plus the KKT residual checker.

Nothing here uses the threshold machinery: offload sizes are searched on
a shrinking grid, and for each candidate the slot shares come from a
golden-section search on the dual of the time-sharing constraint, with
per-user rates from a local Newton solve.  It is slow and only meant for
K <= 6.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InfeasibleError
from .kkt import DualPoint, KKTReport, kkt_residual
from .model import Allocation, Scenario, check_feasible

__all__ = ["OracleConfig", "OracleResult", "oracle_minimize", "kkt_residual", "DualPoint",
           "KKTReport"]

MAX_USERS = 6
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
LN2 = math.log(2.0)


@dataclass(frozen=True)
class OracleConfig:
    grid_refinements: int = 6
    coordinate_passes: int = 40
    tol: float = 1e-9
    points_per_dim: int = 11
    shrink: float = 0.3
    dual_rtol: float = 1e-8

    def __post_init__(self):
        if min(self.grid_refinements, self.points_per_dim - 1) < 1 or self.coordinate_passes < 0:
            raise ValueError("grid_refinements >= 1, points_per_dim >= 2, coordinate_passes >= 0")
        if not (0 < self.shrink < 1 and self.tol > 0 and self.dual_rtol > 0):
            raise ValueError("shrink in (0, 1); tol and dual_rtol positive")


class OracleResult(NamedTuple):
    allocation: Allocation
    objective: float
    diagnostics: dict


# coefficients of a e^a - expm1(a) = sum_{n>=2} a^n/(n (n-2)!) (highest power first)
_Q_COEF = np.array([1.0 / (n * math.factorial(n - 2)) if n >= 2 else 0.0
                    for n in range(16, -1, -1)])


def _q(a):
    small = a < 0.2
    direct = a * np.exp(a) - np.expm1(a)
    return np.where(small, np.polyval(_Q_COEF, np.where(small, a, 0.0)), direct)


def _solve_q(d, iters=60):
    """Nonnegative root a of a e^a - expm1(a) = d (elementwise, d >= 0).

    Newton from an upper bound; q is convex increasing, so the iterates
    decrease monotonically to the root.
    """
    d = np.asarray(d, dtype=float)
    a = np.where(d < 0.5, np.sqrt(2.0 * d), 1.0 + np.log1p(d))
    for _ in range(iters):
        step = (_q(a) - d) / np.where(a > 0, a * np.exp(a), 1.0)
        a = np.maximum(a - step, 0.0)
        # quadratic convergence: the error after a 1e-13 step is far below round-off
        if np.all(np.abs(step) <= 1e-13 * np.maximum(a, 1e-300)):
            break
    return a


class _Cell:
    def __init__(self, s: Scenario):
        self.T = s.sys.slot_T
        self.F = s.sys.cloud_F
        self.B = s.sys.rc.B
        self.N0 = s.sys.rc.N0
        self.beta = s.column("beta")
        self.C = s.column("C")
        self.P = s.column("P")
        self.h2 = s.column("h2")
        self.R = s.column("R")
        self.m = np.maximum(self.R - s.column("Fk") * self.T / self.C, 0.0)
        self.w = self.beta / self.h2  # weight on radiated energy

    def power(self, x):
        return self.N0 * np.expm1(x * LN2 / self.B)

    def rate_at(self, nu):
        """Per-user rate where the time derivative t f(l/t) equals -nu h2/beta."""
        a = _solve_q(nu / (self.w * self.N0))
        return a * self.B / LN2

    def nu_for_rate(self, x):
        a = x * LN2 / self.B
        return self.w * self.N0 * _q(a)

    def local(self, L):
        return np.sum(self.beta * (self.R - L) * self.C * self.P, axis=-1)

    def slot_shares(self, L, rtol):
        """Energy-minimising slot shares for each row of offload sizes ``L`` (n, K)."""
        n, K = L.shape
        busy = L > 0
        any_busy = busy.any(axis=1)
        # the dual optimum lies where the slot sum crosses T; a user alone at
        # rate l/T gives a lower end, every user at rate K l/T an upper end
        lo = np.max(np.where(busy, self.nu_for_rate(L / self.T), 0.0), axis=1)
        hi = np.max(np.where(busy, self.nu_for_rate(K * L / self.T), 0.0), axis=1)
        lo = np.where(any_busy, np.maximum(lo, 1e-300), 1.0)
        hi = np.where(any_busy, np.maximum(hi, lo), 1.0)
        a, b = np.log(lo), np.log(hi)

        def dual(y):
            nu = np.exp(y)[:, None]
            x = self.rate_at(nu)
            t = np.where(busy, L / np.where(x > 0, x, 1.0), 0.0)
            e = np.where(busy, self.w * t * self.power(x), 0.0)
            return np.sum(e, axis=1) + nu[:, 0] * (np.sum(t, axis=1) - self.T)

        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc, fd = dual(c), dual(d)
        for _ in range(400):
            if np.all(b - a <= rtol):
                break
            left = fc > fd  # maximum lies in [a, d]
            a = np.where(left, a, c)
            b = np.where(left, d, b)
            keep = np.where(left, c, d)
            fkeep = np.where(left, fc, fd)
            probe = np.where(left, b - GOLDEN * (b - a), a + GOLDEN * (b - a))
            fprobe = dual(probe)
            c, fc = np.where(left, probe, keep), np.where(left, fprobe, fkeep)
            d, fd = np.where(left, keep, probe), np.where(left, fkeep, fprobe)
        nu = np.exp(0.5 * (a + b))[:, None]
        x = self.rate_at(nu)
        t = np.where(busy, L / np.where(x > 0, x, 1.0), 0.0)
        total = t.sum(axis=1, keepdims=True)
        t = np.where(total > 0, t * self.T / np.where(total > 0, total, 1.0), 0.0)
        return t

    def objective(self, L, t):
        busy = L > 0
        x = np.where(busy, L / np.where(t > 0, t, 1.0), 0.0)
        radiated = np.where(busy, self.w * t * self.power(x), 0.0)
        return self.local(L) + radiated.sum(axis=1)

    def project(self, L):
        """Euclidean projection of overloaded rows onto {C.l = F, m <= l <= R}.

        The projection is clip(l - tau C, m, R) for the shift tau >= 0 that
        restores the capacity equality, found by bisection per row.
        """
        if not math.isfinite(self.F):
            return L
        over = L @ self.C > self.F
        if not over.any():
            return L
        rows = L[over]
        lo = np.zeros(len(rows))
        hi = np.max((rows - self.m) / self.C, axis=1)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            load = np.clip(rows - mid[:, None] * self.C, self.m, self.R) @ self.C
            high = load > self.F
            lo, hi = np.where(high, mid, lo), np.where(high, hi, mid)
            if np.all(hi - lo <= 1e-16 * np.maximum(hi, 1e-300)):
                break
        out = L.copy()
        out[over] = np.clip(rows - hi[:, None] * self.C, self.m, self.R)
        return out

    def evaluate(self, L, rtol):
        L = self.project(np.clip(L, self.m, self.R))
        t = self.slot_shares(L, rtol)
        return L, t, self.objective(L, t)


def oracle_minimize(s: Scenario, cfg: OracleConfig = OracleConfig()) -> OracleResult:
    """Numerically minimise the weighted energy over offload sizes and slot shares."""
    if s.K > MAX_USERS:
        raise DomainError(f"the oracle handles at most {MAX_USERS} users, got {s.K}")
    if not check_feasible(s):
        raise InfeasibleError("minimum offload load exceeds the cloud capacity")
    cell = _Cell(s)
    K = s.K
    span = cell.R - cell.m
    lo_box, hi_box = cell.m.copy(), cell.R.copy()
    best_L = best_t = None
    best = math.inf
    history = []
    evaluations = 0
    for _ in range(cfg.grid_refinements):
        axes = [np.linspace(lo_box[k], hi_box[k], cfg.points_per_dim) for k in range(K)]
        grid = np.array(list(itertools.product(*axes)))
        L, t, obj = cell.evaluate(grid, cfg.dual_rtol)
        evaluations += len(grid)
        i = int(np.argmin(obj))
        if obj[i] < best:
            best, best_L, best_t = float(obj[i]), L[i].copy(), t[i].copy()
        history.append(best)
        # shrink around the incumbent unless it sits on an edge that is not a bound,
        # in which case the box is only moved
        width = hi_box - lo_box
        near = 0.5 * width / (cfg.points_per_dim - 1) + 1e-12 * span
        on_edge = (((best_L - lo_box <= near) & (lo_box > cell.m))
                   | ((hi_box - best_L <= near) & (hi_box < cell.R)))
        half = np.where(on_edge, width / 2, cfg.shrink * width / 2)
        lo_box = np.maximum(best_L - half, cell.m)
        hi_box = np.minimum(best_L + half, cell.R)

    best, best_L, best_t, passes_evals = _line_refine(cell, best, best_L, best_t, cfg)
    evaluations += passes_evals
    history.append(best)

    late_gain = (history[-2] - history[-1]) / max(abs(history[-1]), 1e-300) if len(history) > 1 else 0.0
    diag = {
        "evaluations": evaluations,
        "history": history,
        "budget_exceeded": bool(late_gain > cfg.tol),
    }
    return OracleResult(Allocation(tuple(best_L), tuple(best_t)), best, diag)


def _line_refine(cell: _Cell, best, L0, t0, cfg: OracleConfig):
    """Pattern search along coordinate and capacity-neutral exchange directions."""
    K = len(L0)
    span = cell.R - cell.m
    dirs = [np.eye(K)[k] * span[k] for k in range(K)]
    for j, k in itertools.combinations(range(K), 2):
        d = np.zeros(K)
        d[j], d[k] = 1.0 / cell.C[j], -1.0 / cell.C[k]
        scale = min(span[j] * cell.C[j], span[k] * cell.C[k])
        if scale > 0:
            dirs.append(d * scale)
    steps = np.concatenate([2.0 ** -np.arange(0, 45), -(2.0 ** -np.arange(0, 45))])
    evals = 0
    for _ in range(cfg.coordinate_passes):
        improved = False
        for d in dirs:
            if not np.any(d):
                continue
            cand = L0[None, :] + steps[:, None] * d[None, :]
            ok = np.all((cand >= cell.m - 1e-300) & (cand <= cell.R), axis=1)
            if math.isfinite(cell.F):
                ok &= cand @ cell.C <= cell.F * (1 + 1e-15)
            if not ok.any():
                continue
            cand = cand[ok]
            t = cell.slot_shares(cand, cfg.dual_rtol)
            obj = cell.objective(cand, t)
            evals += len(cand)
            i = int(np.argmin(obj))
            if obj[i] < best:
                best, L0, t0 = float(obj[i]), cand[i].copy(), t[i].copy()
                improved = True
        if not improved:
            break
    return best, L0, t0, evals

"""Threshold policies for TDMA offloading and the bisection drivers that size them.

The optimal policies rank users by offloading priority and compare that
priority with the time-sharing multiplier ``lam``: users above it send all
their bits, users below send only what the local CPU cannot finish, and at
most one user sitting exactly on the threshold takes a fractional share.
``solve_p2`` ignores the cloud capacity, ``solve_p1`` prices it with a
second multiplier ``mu``; ``solve_suboptimal`` and ``solve_baseline`` are
the cheap comparison policies.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfeasibleError, NumericalError
from .kkt import DualPoint, kkt_residual
from .model import Allocation, EnergyBreakdown, Scenario, check_feasible, evaluate
from .scalarfn import LN2, RadioConstants, _priority_from_upsilon, upsilon_for_priority, w0_plus_one

MAX_ITER = 200
ROOT_RTOL = 1e-12
CERTIFY_TOL = 1e-8
FALLBACK_TOL = 1e-5


class PolicyKind(str, enum.Enum):
    P2_OPTIMAL = "P2-optimal"
    P1_OPTIMAL = "P1-optimal"
    SUBOPTIMAL = "suboptimal"
    BASELINE = "baseline"


@dataclass
class Diagnostics:
    outer_iterations: int = 0
    inner_iterations: int = 0
    marginal_user: int | None = None
    capacity_marginal_user: int | None = None
    kkt_residual: float | None = None
    constraint_residuals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "inner_iterations": self.inner_iterations,
            "marginal_user": self.marginal_user,
            "capacity_marginal_user": self.capacity_marginal_user,
            "kkt_residual": self.kkt_residual,
            "constraint_residuals": dict(self.constraint_residuals),
        }


@dataclass(frozen=True)
class SolveReport:
    allocation: Allocation
    dual: DualPoint
    energy: EnergyBreakdown
    policy_kind: PolicyKind
    diagnostics: Diagnostics

    @property
    def objective(self) -> float:
        return self.energy.weighted_total

    def to_dict(self) -> dict:
        return {
            "policy_kind": self.policy_kind.value,
            "allocation": self.allocation.to_dict(),
            "dual": self.dual.to_dict(),
            "energy": self.energy.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
        }


# ---------------------------------------------------------------------------
# per-user kernels
# ---------------------------------------------------------------------------

def time_per_bit(lam, beta, h2, rc: RadioConstants):
    """Seconds per offloaded bit at the rate that balances ``lam``.

    Equals ln2 / (B [W0((lam h2/beta - N0)/(N0 e)) + 1]); defined for every
    lam > 0 (the W0 argument stays above -1/e) and strictly decreasing.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(~(lam > 0)) or not np.all(np.isfinite(lam)):
        raise DomainError("time_per_bit needs a positive finite multiplier")
    q = lam * np.asarray(h2, dtype=float) / (np.asarray(beta, dtype=float) * rc.N0)
    out = LN2 / (rc.B * np.asarray(w0_plus_one(q)))
    return float(out) if out.ndim == 0 else out


class _Users:
    """Column view of a scenario used by the vectorised solvers."""

    def __init__(self, s: Scenario):
        self.s = s
        self.rc = s.sys.rc
        self.T = s.sys.slot_T
        self.F = s.sys.cloud_F
        self.beta = s.column("beta")
        self.C = s.column("C")
        self.P = s.column("P")
        self.h2 = s.column("h2")
        self.R = s.column("R")
        self.m = s.min_offloads()
        # lam * kappa is the W0 branch offset for each user's rate
        self.kappa = self.h2 / (self.beta * self.rc.N0)
        self.forced = bool(np.any(self.m > 0))

    def priorities(self, mu: float = 0.0) -> np.ndarray:
        P_eff = np.maximum(self.P - mu, 0.0)
        ups = self.C * P_eff * self.h2 / self.rc.slope0
        return _priority_from_upsilon(self.beta, self.h2, ups, self.rc)

    def rates(self, lam) -> np.ndarray:
        """Offloading rate (bits/s) of every user at multiplier ``lam`` (broadcasts)."""
        q = np.multiply.outer(np.asarray(lam, dtype=float), self.kappa)
        return self.rc.B * np.asarray(w0_plus_one(q)) / LN2

    def times(self, lam: float, ell: np.ndarray) -> np.ndarray:
        return np.where(ell > 0, ell / self.rates(lam), 0.0)

    def cycles(self, ell: np.ndarray) -> float:
        return float(np.dot(self.C, ell))

    def mu_max(self) -> float:
        return float(np.max(self.P - self.rc.slope0 / (self.C * self.h2)))


def _expand_upper(fun, target, start, max_doublings=2000):
    hi = start
    for _ in range(max_doublings):
        if fun(hi) <= target:
            return hi
        hi *= 2.0
    raise NumericalError("could not bracket the multiplier from above")


def _fit_slot(ell, t, T):
    """Rescale slot shares so they sum to T exactly (absorbs root-finding round-off)."""
    total = t.sum()
    if total > 0:
        t = t * (T / total)
    return t


@dataclass
class _Split:
    lam: float
    ell: np.ndarray
    t: np.ndarray
    marginal: int | None
    iterations: int


def _slot_root(U: _Users, ell: np.ndarray, lo: float, hi: float):
    """Multiplier in (lo, hi] at which fixed offload sizes ``ell`` fill the slot.

    The slot sum is smooth, convex and decreasing in lam, so Newton steps
    are kept whenever they stay inside the bracket; otherwise the bracket
    is halved (geometrically while it is wide).  Returns (lam, iterations).
    """
    T = U.T
    busy = ell > 0
    kap, l_b = U.kappa[busy], ell[busy]
    scale = LN2 / U.rc.B

    def fun(lam):
        u = np.asarray(w0_plus_one(lam * kap))
        S = float(np.sum(l_b / u)) * scale
        # du/dq = e^-u / u
        dS = -float(np.sum(l_b * kap * np.exp(-u) / u**3)) * scale
        return S, dS

    x = hi
    S, dS = fun(x)
    if abs(S - T) <= ROOT_RTOL * T:
        return x, 1
    for it in range(1, MAX_ITER + 1):
        if S > T:
            lo = x
        else:
            hi = x
        step = x - (S - T) / dS if dS < 0 else math.nan
        if lo < step < hi:
            x = step
        elif lo > 0 and hi > 4 * lo:
            x = math.sqrt(lo * hi)
        else:
            x = 0.5 * (lo + hi)
        S, dS = fun(x)
        if abs(S - T) <= ROOT_RTOL * T or hi - lo <= 4 * np.finfo(float).eps * hi:
            return x, it
    raise NumericalError(f"slot equation did not converge in {MAX_ITER} iterations")


def _lambda_for_fixed_bits(U: _Users, ell: np.ndarray):
    """Multiplier at which fixed offload sizes exactly fill the slot."""
    if not np.any(ell > 0):
        return 0.0, 0
    fun = lambda lam: float(np.sum(U.times(lam, ell)))
    hi = _expand_upper(fun, U.T, 2.0 / float(np.min(U.kappa)))
    return _slot_root(U, ell, 0.0, hi)


def _split_slot(U: _Users, phi: np.ndarray) -> _Split:
    """Optimal offload sizes and slot shares for fixed priorities ``phi``.

    Sum of slot shares S(lam) decreases in lam, continuously between the
    distinct positive priorities and with a downward jump at each of them
    (users with that priority drop from full to minimum offload).  The
    jumps are tabulated first; then either T falls inside a jump (the
    threshold equals that priority and the tied users split the leftover
    time) or inside a continuous piece, which is bisected.
    """
    K = len(phi)
    if not (np.any(phi > 0) or U.forced):
        return _Split(0.0, np.zeros(K), np.zeros(K), None, 0)

    levels = np.unique(phi[phi > 0])
    if levels.size:
        rates = U.rates(levels)  # (n_levels, K)
        full_at = phi[None, :] >= levels[:, None]
        above = phi[None, :] > levels[:, None]
        S_minus = np.sum(np.where(full_at, U.R, U.m) / rates, axis=1)
        S_plus = np.sum(np.where(above, U.R, U.m) / rates, axis=1)
        hit = np.nonzero(S_plus <= U.T)[0]
    else:
        hit = np.array([], dtype=int)

    if hit.size:
        j = int(hit[0])
        lam = float(levels[j])
        if S_minus[j] >= U.T:
            return _fill_tie(U, phi, lam, rates[j], U.T - S_plus[j])
        lo = float(levels[j - 1]) if j > 0 else 0.0
        ell = np.where(phi >= lam, U.R, U.m)
        hi = lam
    else:
        lo = float(levels[-1]) if levels.size else 0.0
        ell = U.m.copy()
        start = max(lo, 2.0 / float(np.min(U.kappa)))
        hi = _expand_upper(lambda x: float(np.sum(U.times(x, ell))), U.T, start)

    lam, it = _slot_root(U, ell, lo, hi)
    t = _fit_slot(ell, U.times(lam, ell), U.T)
    return _Split(lam, ell, t, None, it)


def _fill_tie(U: _Users, phi, lam, rates, spare_time) -> _Split:
    """Share ``spare_time`` among users whose priority equals the threshold.

    The lowest-index tied user is kept as the marginal user: the other tied
    users are raised to full offload in index order only while the leftover
    time exceeds what the lowest-index user can absorb.
    """
    ell = np.where(phi > lam, U.R, U.m)
    tied = [int(k) for k in np.nonzero(phi == lam)[0]]
    first, others = tied[0], tied[1:]
    need = (U.R - U.m) / rates
    left = max(float(spare_time), 0.0)
    marginal = None
    for k in others:
        if left <= need[first]:
            break
        if need[k] <= left:
            ell[k] = U.R[k]
            left -= need[k]
        else:
            ell[k] = min(U.m[k] + left * rates[k], U.R[k])
            marginal, left = k, 0.0
            break
    if marginal is None:
        marginal = first
        if left >= need[first]:
            ell[first] = U.R[first]
        elif left > 0:
            ell[first] = min(U.m[first] + left * rates[first], U.R[first])
    t = np.where(ell > 0, ell / rates, 0.0)
    t = _fit_slot(ell, t, U.T)
    return _Split(lam, ell, t, marginal, 0)


def policy_at(lam: float, mu: float, s: Scenario, tie_tol: float = 1e-12):
    """Threshold policy for given multipliers.

    Returns (ell, t, marginal) where ``marginal`` flags users whose
    effective priority lies within ``tie_tol`` (relative) of ``lam``; those
    users are returned at minimum offload, their true share being set by
    the slot constraint.
    """
    if lam < 0 or mu < 0:
        raise DomainError("multipliers must be nonnegative")
    U = _Users(s)
    phi = U.priorities(mu)
    marginal = np.abs(phi - lam) <= tie_tol * max(lam, 1e-300)
    ell = np.where((phi > lam) & ~marginal, U.R, U.m)
    if np.any(ell > 0):
        t = np.where(ell > 0, ell * time_per_bit(lam, U.beta, U.h2, U.rc), 0.0)
    else:
        t = np.zeros_like(ell)
    return ell, t, marginal


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _report(s, U, ell, t, dual, kind, diag, certify):
    alloc = Allocation(tuple(ell), tuple(t))
    energy = evaluate(s, alloc)
    res = {"time_sharing": (float(np.sum(t)) - U.T) / U.T}
    if math.isfinite(U.F):
        res["cloud_capacity"] = (U.cycles(ell) - U.F) / U.F
    diag.constraint_residuals = res
    if certify:
        diag.kkt_residual = kkt_residual(s, alloc, dual).max
    return SolveReport(alloc, dual, energy, kind, diag)


def solve_p2(s: Scenario) -> SolveReport:
    """Minimum weighted energy ignoring the cloud capacity (one bisection on lam)."""
    U = _Users(s)
    sp = _split_slot(U, U.priorities(0.0))
    diag = Diagnostics(inner_iterations=sp.iterations, marginal_user=sp.marginal)
    return _report(s, U, sp.ell, sp.t, DualPoint(sp.lam, 0.0), PolicyKind.P2_OPTIMAL, diag, True)


def solve_p1(s: Scenario) -> SolveReport:
    """Minimum weighted energy under both the slot and the cloud-capacity constraint."""
    U = _Users(s)
    base = _split_slot(U, U.priorities(0.0))
    diag = Diagnostics(inner_iterations=base.iterations, marginal_user=base.marginal)
    if not math.isfinite(U.F) or U.cycles(base.ell) <= U.F:
        return _report(s, U, base.ell, base.t, DualPoint(base.lam, 0.0),
                       PolicyKind.P1_OPTIMAL, diag, True)
    if not check_feasible(s):
        raise InfeasibleError("minimum offload load exceeds the cloud capacity")

    lo, hi = 0.0, U.mu_max()
    sol_lo, sol_hi = base, _split_slot(U, U.priorities(hi))
    inner = base.iterations + sol_hi.iterations
    outer = 0
    while True:
        outer += 1
        if abs(U.cycles(sol_hi.ell) - U.F) <= ROOT_RTOL * U.F:
            diag = Diagnostics(outer, inner, sol_hi.marginal)
            return _report(s, U, sol_hi.ell, sol_hi.t, DualPoint(sol_hi.lam, hi),
                           PolicyKind.P1_OPTIMAL, diag, True)
        built = _certify_capacity_point(U, sol_lo, sol_hi, lo, hi)
        if built is not None:
            lam, mu, ell, t, marg, cap_marg, it = built
            diag = Diagnostics(outer, inner + it, marg, cap_marg)
            return _report(s, U, ell, t, DualPoint(lam, mu), PolicyKind.P1_OPTIMAL, diag, True)
        if outer >= MAX_ITER or hi - lo <= 4 * np.finfo(float).eps * hi:
            break
        mid = 0.5 * (lo + hi)
        sol = _split_slot(U, U.priorities(mid))
        inner += sol.iterations
        if U.cycles(sol.ell) > U.F:
            lo, sol_lo = mid, sol
        else:
            hi, sol_hi = mid, sol

    # bracket collapsed without a certified construction
    diag = Diagnostics(outer, inner, sol_hi.marginal)
    rep = _report(s, U, sol_hi.ell, sol_hi.t, DualPoint(sol_hi.lam, hi),
                  PolicyKind.P1_OPTIMAL, diag, True)
    if rep.diagnostics.kkt_residual > FALLBACK_TOL:
        raise NumericalError(
            f"capacity bisection ended with KKT residual {rep.diagnostics.kkt_residual:.3g}")
    return rep


def _certify_capacity_point(U: _Users, sol_lo: _Split, sol_hi: _Split, mu_lo, mu_hi):
    """Try to build the exact optimum from the two bracketing threshold policies.

    Users whose offload differs between the endpoints are the only ones that
    can be fractional at the optimum.  With one such user its size follows
    from the capacity equation, lam from the slot equation and mu from its
    priority equalling lam.  With two, mu is where their priorities cross
    and their sizes solve the two linear constraints.  The result is kept
    only if the KKT residual confirms it.
    """
    diff = np.nonzero(sol_lo.ell != sol_hi.ell)[0]
    if diff.size == 0 or diff.size > 2:
        return None
    ell = sol_hi.ell.copy()
    iters = 0
    if diff.size == 1:
        j = int(diff[0])
        ell[j] = 0.0
        lj = (U.F - U.cycles(ell)) / U.C[j]
        if not (U.m[j] * (1 - 1e-12) - 1e-9 <= lj <= U.R[j] * (1 + 1e-12)):
            return None
        ell[j] = min(max(lj, U.m[j]), U.R[j])
        lam, iters = _lambda_for_fixed_bits(U, ell)
        ups = float(upsilon_for_priority(lam * U.kappa[j]))
        mu = float(U.P[j] - ups * U.rc.slope0 / (U.C[j] * U.h2[j]))
        if not mu >= 0:
            return None
        cap_marg, marg = j, j
    else:
        j, k = (int(v) for v in diff)
        gap = lambda mu: float(U.priorities(mu)[j] - U.priorities(mu)[k])
        a, b = mu_lo, mu_hi
        ga = gap(a)
        if ga * gap(b) > 0:
            return None
        for iters in range(1, MAX_ITER + 1):
            mid = 0.5 * (a + b)
            gm = gap(mid)
            if (gm > 0) == (ga > 0):
                a, ga = mid, gm
            else:
                b = mid
            if b - a <= 4 * np.finfo(float).eps * b:
                break
        mu = 0.5 * (a + b)
        phi = U.priorities(mu)
        lam = 0.5 * (phi[j] + phi[k])
        if not lam > 0:
            return None
        r = U.rates(lam)
        rest = np.ones_like(ell, dtype=bool)
        rest[[j, k]] = False
        t_left = U.T - float(np.sum(np.where(rest & (ell > 0), ell / r, 0.0)))
        c_left = U.F - float(np.dot(U.C[rest], ell[rest]))
        A = np.array([[1.0 / r[j], 1.0 / r[k]], [U.C[j], U.C[k]]])
        try:
            sol = np.linalg.solve(A, np.array([t_left, c_left]))
        except np.linalg.LinAlgError:
            return None
        for idx, v in zip((j, k), sol):
            if not (U.m[idx] * (1 - 1e-12) - 1e-9 <= v <= U.R[idx] * (1 + 1e-12)):
                return None
            ell[idx] = min(max(v, U.m[idx]), U.R[idx])
        marg, cap_marg = j, k
    t = _fit_slot(ell, U.times(lam, ell) if lam > 0 else np.zeros_like(ell), U.T)
    alloc = Allocation(tuple(ell), tuple(t))
    rep = kkt_residual(U.s, alloc, DualPoint(lam, mu))
    if rep.max > CERTIFY_TOL:
        return None
    return lam, mu, ell, t, marg, cap_marg, iters


def solve_suboptimal(s: Scenario) -> SolveReport:
    """Greedy capacity fill by plain priority, then one bisection for the slot shares."""
    U = _Users(s)
    base = _split_slot(U, U.priorities(0.0))
    if not math.isfinite(U.F) or U.cycles(base.ell) <= U.F:
        diag = Diagnostics(inner_iterations=base.iterations, marginal_user=base.marginal)
        return _report(s, U, base.ell, base.t, DualPoint(base.lam, 0.0),
                       PolicyKind.SUBOPTIMAL, diag, False)
    if not check_feasible(s):
        raise InfeasibleError("minimum offload load exceeds the cloud capacity")

    phi = U.priorities(0.0)
    ell = U.m.copy()
    budget = U.F - U.cycles(ell)
    last = None
    # stable sort keeps index order among equal priorities
    for k in np.argsort(-phi, kind="stable"):
        if phi[k] <= 0 or budget <= 0:
            break
        extra = U.C[k] * (U.R[k] - U.m[k])
        if extra <= budget:
            ell[k] = U.R[k]
            budget -= extra
        else:
            ell[k] = U.m[k] + budget / U.C[k]
            budget = 0.0
            last = int(k)
    lam, it = _lambda_for_fixed_bits(U, ell)
    t = _fit_slot(ell, U.times(lam, ell) if lam > 0 else np.zeros_like(ell), U.T)
    diag = Diagnostics(1, base.iterations + it, None, last)
    return _report(s, U, ell, t, DualPoint(lam, 0.0), PolicyKind.SUBOPTIMAL, diag, False)


def solve_baseline(s: Scenario) -> SolveReport:
    """Equal slot shares for every user that offloads, offload sizes optimised per user."""
    U = _Users(s)
    if not check_feasible(s):
        raise InfeasibleError("minimum offload load exceeds the cloud capacity")
    ups = U.C * U.P * U.h2 / U.rc.slope0
    active = (ups > 1.0) | (U.m > 0)
    K = len(ups)
    if not np.any(active):
        diag = Diagnostics()
        return _report(s, U, np.zeros(K), np.zeros(K), DualPoint(0.0, 0.0),
                       PolicyKind.BASELINE, diag, False)
    t = np.where(active, U.T / np.count_nonzero(active), 0.0)

    def sizes(mu):
        ups_eff = U.C * np.maximum(U.P - mu, 0.0) * U.h2 / U.rc.slope0
        want = np.where(ups_eff > 1.0, t * U.rc.B * np.log2(np.maximum(ups_eff, 1.0)), U.m)
        return np.where(active, np.clip(want, U.m, U.R), U.m)

    ell = sizes(0.0)
    mu = 0.0
    it = 0
    if math.isfinite(U.F) and U.cycles(ell) > U.F:
        lo, hi = 0.0, float(np.max(U.P))
        for it in range(1, MAX_ITER + 1):
            mid = 0.5 * (lo + hi)
            if U.cycles(sizes(mid)) > U.F:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 4 * np.finfo(float).eps * hi or \
                    U.F - U.cycles(sizes(hi)) <= ROOT_RTOL * U.F:
                break
        mu = hi
        ell = sizes(mu)
    diag = Diagnostics(outer_iterations=it)
    return _report(s, U, ell, t, DualPoint(0.0, mu), PolicyKind.BASELINE, diag, False)


SOLVERS = {
    PolicyKind.P2_OPTIMAL: solve_p2,
    PolicyKind.P1_OPTIMAL: solve_p1,
    PolicyKind.SUBOPTIMAL: solve_suboptimal,
    PolicyKind.BASELINE: solve_baseline,
}


def solve(s: Scenario, policy: PolicyKind | str = PolicyKind.P1_OPTIMAL) -> SolveReport:
    return SOLVERS[PolicyKind(policy)](s)


def report_from_dict(d: dict) -> SolveReport:
    """Rebuild a report from its JSON form (energy is recomputed by the caller if needed)."""
    e = d["energy"]
    energy = EnergyBreakdown(tuple(e["E_loc"]), tuple(e["E_off"]), tuple(e["tx_power"]),
                             tuple(e["rate"]), float(e["weighted_total"]))
    diag = Diagnostics(**d.get("diagnostics", {}))
    return SolveReport(Allocation.from_dict(d["allocation"]), DualPoint.from_dict(d["dual"]),
                       energy, PolicyKind(d["policy_kind"]), diag)

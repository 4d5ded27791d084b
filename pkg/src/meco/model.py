"""Scenario and allocation types, energy accounting and constraint audits."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolation
from .scalarfn import RadioConstants, f

INFINITE = math.inf


@dataclass(frozen=True)
class SystemParams:
    slot_T: float
    rc: RadioConstants
    cloud_F: float = INFINITE

    def __post_init__(self):
        if not (math.isfinite(self.slot_T) and self.slot_T > 0):
            raise ValueError(f"slot_T must be positive, got {self.slot_T!r}")
        if not self.cloud_F > 0:
            raise ValueError(f"cloud_F must be positive or INFINITE, got {self.cloud_F!r}")

    @property
    def finite_cloud(self) -> bool:
        return math.isfinite(self.cloud_F)


@dataclass(frozen=True)
class UserParams:
    """One mobile: weight, cycles/bit, J/cycle, power gain, input bits, local cycles/s."""

    beta: float
    C: float
    P: float
    h2: float
    R: float
    Fk: float

    def __post_init__(self):
        for name in ("beta", "C", "h2", "R"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        for name in ("P", "Fk"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be nonnegative, got {v!r}")


@dataclass(frozen=True)
class Scenario:
    sys: SystemParams
    users: tuple[UserParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if len(self.users) < 1:
            raise ValueError("a scenario needs at least one user")

    @property
    def K(self) -> int:
        return len(self.users)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(u, name) for u in self.users], dtype=float)

    def min_offloads(self) -> np.ndarray:
        return np.array([min_offload(u, self.sys) for u in self.users])

    def with_system(self, **changes) -> "Scenario":
        fields_ = {"slot_T": self.sys.slot_T, "rc": self.sys.rc, "cloud_F": self.sys.cloud_F}
        fields_.update(changes)
        return Scenario(SystemParams(**fields_), self.users)


@dataclass(frozen=True)
class Allocation:
    """Offloaded bits ``ell`` and TDMA slot shares ``t`` (seconds) per user."""

    ell: tuple[float, ...]
    t: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "ell", tuple(float(v) for v in self.ell))
        object.__setattr__(self, "t", tuple(float(v) for v in self.t))
        if len(self.ell) != len(self.t):
            raise ValueError("ell and t must have equal length")

    @classmethod
    def zeros(cls, K: int) -> "Allocation":
        return cls((0.0,) * K, (0.0,) * K)

    def to_dict(self) -> dict:
        return {"ell": list(self.ell), "t": list(self.t)}

    @classmethod
    def from_dict(cls, d: dict) -> "Allocation":
        return cls(d["ell"], d["t"])


@dataclass(frozen=True)
class EnergyBreakdown:
    E_loc: tuple[float, ...]
    E_off: tuple[float, ...]
    tx_power: tuple[float, ...]
    rate: tuple[float, ...]
    weighted_total: float

    def to_dict(self) -> dict:
        return {
            "E_loc": list(self.E_loc),
            "E_off": list(self.E_off),
            "tx_power": list(self.tx_power),
            "rate": list(self.rate),
            "weighted_total": self.weighted_total,
        }


@dataclass(frozen=True)
class Violation:
    constraint: str
    user: int | None
    magnitude: float

    def to_dict(self) -> dict:
        return {"constraint": self.constraint, "user": self.user, "magnitude": self.magnitude}


def min_offload(u: UserParams, sys: SystemParams) -> float:
    """Bits the local CPU cannot finish within the slot: (R - Fk T / C)^+."""
    return max(u.R - u.Fk * sys.slot_T / u.C, 0.0)


def min_offload_cycles(s: Scenario) -> float:
    return float(np.sum(s.column("C") * s.min_offloads()))


def check_feasible(s: Scenario) -> bool:
    """True iff the forced offload load fits in the cloud: sum C_k m_k^+ <= F."""
    if not s.sys.finite_cloud:
        return True
    return min_offload_cycles(s) <= s.sys.cloud_F


def evaluate(s: Scenario, a: Allocation) -> EnergyBreakdown:
    if len(a.ell) != s.K:
        raise ValueError(f"allocation has {len(a.ell)} users, scenario has {s.K}")
    rc = s.sys.rc
    e_loc, e_off, power, rate = [], [], [], []
    total = 0.0
    for k, u in enumerate(s.users):
        ell, t = a.ell[k], a.t[k]
        if ell > 0 and t <= 0:
            raise ConstraintViolation(f"user {k} offloads {ell} bits in zero time")
        if t > 0 and ell > 0:
            r = ell / t
            p = f(r, rc) / u.h2
            off = t * p
        else:
            r = p = off = 0.0
        loc = (u.R - ell) * u.C * u.P
        e_loc.append(loc)
        e_off.append(off)
        power.append(p)
        rate.append(r)
        total += u.beta * (loc + off)
    return EnergyBreakdown(tuple(e_loc), tuple(e_off), tuple(power), tuple(rate), total)


def weighted_energy(s: Scenario, a: Allocation) -> float:
    return evaluate(s, a).weighted_total


def check_constraints(s: Scenario, a: Allocation, tol: float = 1e-9) -> list[Violation]:
    """List every violated constraint of the finite-capacity problem.

    Each residual is divided by ``max(1, |rhs|)`` before comparing with
    ``tol``; the reported magnitude is the raw (unscaled) excess.
    """
    out: list[Violation] = []
    T = s.sys.slot_T

    def flag(name, user, excess, rhs):
        if excess > tol * max(1.0, abs(rhs)):
            out.append(Violation(name, user, float(excess)))

    flag("time_sharing", None, sum(a.t) - T, T)
    if s.sys.finite_cloud:
        F = s.sys.cloud_F
        flag("cloud_capacity", None, sum(u.C * l for u, l in zip(s.users, a.ell)) - F, F)
    for k, u in enumerate(s.users):
        m = min_offload(u, s.sys)
        flag("min_offload", k, m - a.ell[k], m)
        flag("max_offload", k, a.ell[k] - u.R, u.R)
        flag("nonneg_time", k, -a.t[k], 0.0)
        if a.ell[k] > 0 and a.t[k] <= 0:
            out.append(Violation("offload_without_time", k, a.ell[k]))
    return out


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def _num_or_inf(v: float):
    return "inf" if math.isinf(v) else v


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "system": {
            "T": s.sys.slot_T,
            "B": s.sys.rc.B,
            "N0": s.sys.rc.N0,
            "F": _num_or_inf(s.sys.cloud_F),
        },
        "users": [
            {"beta": u.beta, "C": u.C, "P": u.P, "h2": u.h2, "R": u.R, "Fk": u.Fk}
            for u in s.users
        ],
    }


def scenario_from_dict(d: dict) -> Scenario:
    sysd = d["system"]
    F = sysd.get("F", "inf")
    F = INFINITE if (isinstance(F, str) and F.lower() in ("inf", "infinite")) else float(F)
    sys = SystemParams(float(sysd["T"]), RadioConstants(float(sysd["B"]), float(sysd["N0"])), F)
    users = [
        UserParams(float(u.get("beta", 1.0)), float(u["C"]), float(u["P"]), float(u["h2"]),
                   float(u["R"]), float(u["Fk"]))
        for u in d["users"]
    ]
    return Scenario(sys, tuple(users))


def dump_scenario(s: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))

"""Seeded random scenarios with the standard simulation distributions.

Random stream contract (part of the file format, so other implementations
can reproduce scenarios bit for bit):

* generator: Philox-4x64 with 10 rounds (numpy ``Philox``), key = (seed, 0);
* user ``k`` gets its own stream by starting the 256-bit counter at
  (0, k, 0, 0);
* per user, in this order: local CPU speed (uniform over the choices),
  energy per cycle, data size, cycles per bit (all uniform on [lo, hi)),
  channel power gain (exponential with the configured mean), each drawn
  with numpy ``Generator`` methods ``integers``, ``uniform``, ``uniform``,
  ``uniform``, ``exponential``;
* weights are all 1.

Trial seeds for sweeps are ``SeedSequence([base_seed, trial]).generate_state(1,
uint64)[0]``; they do not depend on the axis position, so every point of
a sweep sees the same channel and task draws.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .model import INFINITE, Scenario, SystemParams, UserParams
from .scalarfn import RadioConstants

BITS_PER_KB = 8192
SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class GenSpec:
    K: int = 30
    T: float = 0.1
    B: float = 10e6
    N0: float = 1e-9
    avg_path_gain: float = 1e-6
    Fk_choices: tuple[float, ...] = tuple(0.1e9 * i for i in range(1, 11))
    P_range: tuple[float, float] = (0.0, 20e-11)
    R_range: tuple[float, float] = (100 * BITS_PER_KB, 500 * BITS_PER_KB)
    C_range: tuple[float, float] = (500.0, 1500.0)
    cloud_F: float = 6e9
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "Fk_choices", tuple(float(v) for v in self.Fk_choices))
        for name in ("P_range", "R_range", "C_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"{name} must satisfy lo <= hi, got {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not self.Fk_choices:
            raise ValueError("Fk_choices must be nonempty")
        if not (self.avg_path_gain > 0 and self.T > 0):
            raise ValueError("avg_path_gain and T must be positive")
        if self.R_range[0] <= 0 or self.C_range[0] <= 0 or self.P_range[0] < 0:
            raise ValueError("R and C ranges must be positive, P range nonnegative")
        if not 0 <= int(self.seed) <= SEED_MASK:
            raise ValueError("seed must fit in 64 unsigned bits")
        object.__setattr__(self, "seed", int(self.seed))

    def with_(self, **changes) -> "GenSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["Fk_choices"] = list(self.Fk_choices)
        for name in ("P_range", "R_range", "C_range"):
            d[name] = list(d[name])
        d["cloud_F"] = "inf" if math.isinf(self.cloud_F) else self.cloud_F
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        d = dict(d)
        F = d.get("cloud_F", 6e9)
        if isinstance(F, str):
            if F.lower() not in ("inf", "infinite"):
                raise ValueError(f"cloud_F must be a number or 'inf', got {F!r}")
            F = INFINITE
        d["cloud_F"] = float(F)
        for name in ("Fk_choices", "P_range", "R_range", "C_range"):
            if name in d:
                d[name] = tuple(d[name])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown GenSpec fields: {sorted(unknown)}")
        return cls(**d)


def default_spec() -> GenSpec:
    """The standard 30-user cell: 100 ms slot, 10 MHz, 6e9 cloud cycles, R in 100..500 KB."""
    return GenSpec()


def desk_spec(**changes) -> GenSpec:
    """Default cell with data sizes of 100..500 units of 200 bits.

    With kilobyte-sized inputs the forced offload load of the default cell
    exceeds every cloud capacity in the 1e9..1e10 range, so the capacity
    sweeps have no feasible point.  This family keeps every other constant
    and shrinks only the data unit, which puts the capacity knee inside the
    swept range.
    """
    return replace(GenSpec(R_range=(100 * DESK_BITS_PER_UNIT, 500 * DESK_BITS_PER_UNIT)), **changes)


DESK_BITS_PER_UNIT = 200


def _user_stream(seed: int, k: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=np.array([seed & SEED_MASK, 0], dtype=np.uint64),
                              counter=np.array([0, k, 0, 0], dtype=np.uint64))
    return np.random.Generator(bitgen)


def generate(spec: GenSpec) -> Scenario:
    users = []
    choices = np.asarray(spec.Fk_choices, dtype=float)
    for k in range(spec.K):
        rng = _user_stream(spec.seed, k)
        Fk = float(choices[rng.integers(len(choices))])
        P = float(rng.uniform(*spec.P_range))
        R = float(rng.uniform(*spec.R_range))
        C = float(rng.uniform(*spec.C_range))
        h2 = float(rng.exponential(spec.avg_path_gain))
        if h2 <= 0:
            # probability ~2^-53; keep the gain strictly positive
            h2 = np.nextafter(0.0, 1.0)
        users.append(UserParams(beta=1.0, C=C, P=P, h2=h2, R=R, Fk=Fk))
    sys = SystemParams(spec.T, RadioConstants(spec.B, spec.N0), spec.cloud_F)
    return Scenario(sys, tuple(users))


def trial_seed(base_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(trial)]).generate_state(1, np.uint64)[0])


def dump_spec(spec: GenSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)


def load_spec(path) -> GenSpec:
    with open(path) as fh:
        return GenSpec.from_dict(json.load(fh))

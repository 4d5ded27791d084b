"""Command-line runner: ``meco solve | sweep | gen | check``.

Exit codes: 0 ok, 1 constraint audit failed (``check``), 2 infeasible
cell, 3 unreadable input, 4 numerical failure.  Errors are also written
to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasibleError, NumericalError
from .kkt import kkt_residual
from .model import (INFINITE, Allocation, check_constraints, check_feasible, min_offload_cycles,
                    scenario_from_dict, scenario_to_dict)
from .scenario import GenSpec, default_spec, generate, trial_seed
from .solvers import PolicyKind, SolveReport, solve

EXIT_OK, EXIT_AUDIT, EXIT_INFEASIBLE, EXIT_PARSE, EXIT_NUMERIC = 0, 1, 2, 3, 4
KKT_GATE = 1e-6
CONSTRAINT_GATE = 1e-9
OPTIMAL = (PolicyKind.P1_OPTIMAL, PolicyKind.P2_OPTIMAL)
AXES = ("slot_T", "cloud_F")
CSV_COLUMNS = ["axis_value", "trial", "policy", "weighted_energy_J", "lambda", "mu",
               "offloaded_bits_total", "solve_iterations"]


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


@dataclass(frozen=True)
class SweepSpec:
    base: GenSpec
    axis: str
    values: tuple[float, ...]
    trials: int = 100
    policies: tuple[PolicyKind, ...] = (PolicyKind.P1_OPTIMAL, PolicyKind.SUBOPTIMAL,
                                        PolicyKind.BASELINE)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals or list(vals) != sorted(vals):
            raise ValueError("values must be nonempty and sorted ascending")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        pols = tuple(PolicyKind(p) for p in self.policies)
        if not pols:
            raise ValueError("at least one policy is required")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "policies", pols)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        known = {"base", "axis", "values", "trials", "policies"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sweep fields: {sorted(unknown)}")
        kw = {"base": GenSpec.from_dict(d.get("base", {})), "axis": d["axis"],
              "values": tuple(d["values"])}
        if "trials" in d:
            kw["trials"] = int(d["trials"])
        if "policies" in d:
            kw["policies"] = tuple(d["policies"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "axis": self.axis, "values": list(self.values),
                "trials": self.trials, "policies": [p.value for p in self.policies]}


def _fmt(v) -> str:
    return repr(float(v))


def _gate(scenario, rep: SolveReport, tol: float = CONSTRAINT_GATE) -> None:
    """Abort on a report that fails the constraint audit (and KKT for optimal policies)."""
    if rep.policy_kind is PolicyKind.P2_OPTIMAL:
        # this policy ignores the cloud by definition
        scenario = scenario.with_system(cloud_F=INFINITE)
    bad = check_constraints(scenario, rep.allocation, tol)
    if bad:
        raise CliError(EXIT_NUMERIC, "numeric",
                       f"{rep.policy_kind.value} output violates {bad[0].constraint} "
                       f"(user {bad[0].user}, excess {bad[0].magnitude:.3g})")
    if rep.policy_kind in OPTIMAL:
        res = kkt_residual(scenario, rep.allocation, rep.dual).max
        if not res <= KKT_GATE:
            raise CliError(EXIT_NUMERIC, "numeric",
                           f"{rep.policy_kind.value} KKT residual {res:.3g} exceeds {KKT_GATE}")


def _solve_checked(scenario, policy: PolicyKind, tol: float = CONSTRAINT_GATE) -> SolveReport:
    if policy is not PolicyKind.P2_OPTIMAL and not check_feasible(scenario):
        raise CliError(EXIT_INFEASIBLE, "infeasible",
                       f"minimum offload load {min_offload_cycles(scenario):.6g} cycles exceeds "
                       f"cloud capacity {scenario.sys.cloud_F:.6g}")
    try:
        rep = solve(scenario, policy)
    except InfeasibleError as e:
        raise CliError(EXIT_INFEASIBLE, "infeasible", str(e)) from e
    except NumericalError as e:
        raise CliError(EXIT_NUMERIC, "numeric", str(e)) from e
    _gate(scenario, rep, tol)
    return rep


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(EXIT_PARSE, "parse", f"{path}: {e}") from e


def _parse(builder, data, what):
    try:
        return builder(data)
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(EXIT_PARSE, "parse", f"bad {what}: {e}") from e


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def run_solve(scenario_file, policy, out_file, tol=CONSTRAINT_GATE) -> int:
    scenario = _parse(scenario_from_dict, _read_json(scenario_file), "scenario")
    rep = _solve_checked(scenario, PolicyKind(policy), tol)
    _write_json(rep.to_dict(), out_file)
    return EXIT_OK


def sweep_rows(sweep: SweepSpec, tol=CONSTRAINT_GATE, sink=None):
    """Solve every (axis value, trial, policy) cell in order; returns the row list.

    ``sink`` receives each row as soon as it is computed, so partial results
    survive a later failure.
    """
    rows = []
    for value in sweep.values:
        spec_v = replace(sweep.base, **{"T" if sweep.axis == "slot_T" else "cloud_F": value})
        per_policy = {p: [] for p in sweep.policies}
        for trial in range(sweep.trials):
            scenario = generate(replace(spec_v, seed=trial_seed(sweep.base.seed, trial)))
            for policy in sweep.policies:
                rep = _solve_checked(scenario, policy, tol)
                d = rep.diagnostics
                row = [_fmt(value), str(trial), policy.value, _fmt(rep.objective),
                       _fmt(rep.dual.lam), _fmt(rep.dual.mu),
                       _fmt(sum(rep.allocation.ell)),
                       str(d.outer_iterations + d.inner_iterations)]
                per_policy[policy].append(row)
                rows.append(row)
                if sink:
                    sink(row)
        for policy in sweep.policies:
            block = np.array([[float(r[i]) for i in (3, 4, 5, 6, 7)] for r in per_policy[policy]])
            mean = block.mean(axis=0)
            row = [_fmt(value), "mean", policy.value] + [_fmt(v) for v in mean]
            rows.append(row)
            if sink:
                sink(row)
    return rows


def run_sweep(sweep_file, out_csv, seed=None, trials=None, policies=None,
              tol=CONSTRAINT_GATE) -> int:
    sweep = _parse(SweepSpec.from_dict, _read_json(sweep_file), "sweep")
    if seed is not None:
        sweep = replace(sweep, base=replace(sweep.base, seed=seed))
    if trials is not None:
        sweep = _parse(lambda t: replace(sweep, trials=t), trials, "trial count")
    if policies:
        sweep = _parse(lambda p: replace(sweep, policies=tuple(p)), policies, "policy list")
    fh = sys.stdout if out_csv in (None, "-") else open(out_csv, "w", newline="")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)

        def sink(row):
            writer.writerow(row)
            fh.flush()

        sweep_rows(sweep, tol, sink)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def run_gen(spec_file, out_file, seed=None) -> int:
    spec = default_spec() if spec_file is None else _parse(GenSpec.from_dict,
                                                           _read_json(spec_file), "spec")
    if seed is not None:
        spec = _parse(lambda s: replace(spec, seed=s), seed, "seed")
    _write_json(scenario_to_dict(generate(spec)), out_file)
    return EXIT_OK


def run_check(scenario_file, allocation_file, out_file, tol=1e-9) -> int:
    scenario = _parse(scenario_from_dict, _read_json(scenario_file), "scenario")
    feasible = check_feasible(scenario)
    result = {"feasible": feasible, "min_offload_cycles": min_offload_cycles(scenario),
              "cloud_F": "inf" if math.isinf(scenario.sys.cloud_F) else scenario.sys.cloud_F}
    code = EXIT_OK if feasible else EXIT_INFEASIBLE
    if allocation_file is not None:
        data = _read_json(allocation_file)
        alloc_d = data.get("allocation", data) if isinstance(data, dict) else data
        alloc = _parse(Allocation.from_dict, alloc_d, "allocation")
        if len(alloc.ell) != scenario.K:
            raise CliError(EXIT_PARSE, "parse",
                           f"allocation has {len(alloc.ell)} users, scenario has {scenario.K}")
        violations = check_constraints(scenario, alloc, tol)
        result["violations"] = [v.to_dict() for v in violations]
        if violations and code == EXIT_OK:
            code = EXIT_AUDIT
    _write_json(result, out_file)
    return code


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    policies = [p.value for p in PolicyKind]
    ap = argparse.ArgumentParser(prog="meco", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("solve", help="solve one scenario file")
    p.add_argument("scenario")
    p.add_argument("--policy", choices=policies, default=PolicyKind.P1_OPTIMAL.value)
    p.add_argument("--out", default="-")
    p.add_argument("--tol", type=float, default=CONSTRAINT_GATE,
                   help="relative constraint tolerance of the output audit")

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over slot_T or cloud_F")
    p.add_argument("sweep")
    p.add_argument("--out", default="-")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--policy", action="append", choices=policies,
                   help="repeat to select several policies (default: from the sweep file)")
    p.add_argument("--tol", type=float, default=CONSTRAINT_GATE)

    p = sub.add_parser("gen", help="generate a scenario from a GenSpec file (or the defaults)")
    p.add_argument("spec", nargs="?")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="-")

    p = sub.add_parser("check", help="feasibility and constraint audit")
    p.add_argument("scenario")
    p.add_argument("allocation", nargs="?",
                   help="allocation JSON ({ell, t}) or a solve report")
    p.add_argument("--out", default="-")
    p.add_argument("--tol", type=float, default=1e-9)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "solve":
            return run_solve(args.scenario, args.policy, args.out, args.tol)
        if args.verb == "sweep":
            return run_sweep(args.sweep, args.out, args.seed, args.trials, args.policy, args.tol)
        if args.verb == "gen":
            return run_gen(args.spec, args.out, args.seed)
        return run_check(args.scenario, args.allocation, args.out, args.tol)
    except CliError as e:
        sys.stderr.write(json.dumps({"error": e.kind, "message": str(e)}) + "\n")
        return e.code


if __name__ == "__main__":
    sys.exit(main())

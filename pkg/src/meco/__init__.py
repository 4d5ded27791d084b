"""Energy-optimal offloading and TDMA slot allocation for mobile-edge computing cells."""
from .errors import ConstraintViolation, DomainError, InfeasibleError, NumericalError
from .kkt import DualPoint, KKTReport, kkt_residual
from .model import (INFINITE, Allocation, EnergyBreakdown, Scenario, SystemParams, UserParams,
                    Violation, check_constraints, check_feasible, evaluate, load_scenario,
                    dump_scenario, min_offload, scenario_from_dict, scenario_to_dict,
                    weighted_energy)
from .scalarfn import (RadioConstants, effective_priority, f, f_prime, f_prime_inv, g, g_inv,
                       lambert_w0, priority, upsilon)
from .scenario import GenSpec, default_spec, desk_spec, generate, trial_seed
from .solvers import (PolicyKind, SolveReport, policy_at, solve, solve_baseline, solve_p1,
                      solve_p2, solve_suboptimal, time_per_bit)

__version__ = "0.1.0"

__all__ = [
    "ConstraintViolation", "DomainError", "InfeasibleError", "NumericalError",
    "DualPoint", "KKTReport", "kkt_residual",
    "INFINITE", "Allocation", "EnergyBreakdown", "Scenario", "SystemParams", "UserParams",
    "Violation", "check_constraints", "check_feasible", "evaluate", "load_scenario",
    "dump_scenario", "min_offload", "scenario_from_dict", "scenario_to_dict", "weighted_energy",
    "RadioConstants", "effective_priority", "f", "f_prime", "f_prime_inv", "g", "g_inv",
    "lambert_w0", "priority", "upsilon",
    "GenSpec", "default_spec", "desk_spec", "generate", "trial_seed",
    "PolicyKind", "SolveReport", "policy_at", "solve", "solve_baseline", "solve_p1", "solve_p2",
    "solve_suboptimal", "time_per_bit",
]

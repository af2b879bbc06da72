"""Variable-horizon MILP trajectory planning with in-optimiser obstacle clustering.

The package carries its own LP and MILP solvers (:mod:`clusterplan.lp`,
:mod:`clusterplan.bnb`) so every layer can be inspected and tested.
"""
from .bnb import MilpOutcome, MilpStatus, SolverOptions, solve_milp
from .dynamics import LtiContinuous, LtiDiscrete, double_integrator_2d, position_selector, zoh_discretize
from .formulation import (ClusterAssignment, Mode, Plan, Rect, Scenario, ScenarioError, ValidationReport,
                          build_clustered, build_model, build_unclustered, count_binaries, decode_plan,
                          seed_assignment, validate_plan)
from .lp import LpOutcome, LpProblem, LpStatus, LpTolerances, solve_lp
from .model import MilpModel, ModelError
from .scenario_io import (BUILTIN_SCENARIOS, ScenarioFormatError, builtin_scenario, load_scenario,
                          load_scenario_file, read_trace, render_svg, write_trace)
from .simulator import StepRecord, Trace, run_receding_horizon

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_SCENARIOS", "ClusterAssignment", "LpOutcome", "LpProblem", "LpStatus", "LpTolerances",
    "LtiContinuous", "LtiDiscrete", "MilpModel", "MilpOutcome", "MilpStatus", "Mode", "ModelError", "Plan",
    "Rect", "Scenario", "ScenarioError", "ScenarioFormatError", "SolverOptions", "StepRecord", "Trace",
    "ValidationReport", "build_clustered", "build_model", "build_unclustered", "builtin_scenario",
    "count_binaries", "decode_plan", "double_integrator_2d", "load_scenario", "load_scenario_file",
    "position_selector", "read_trace", "render_svg", "run_receding_horizon", "seed_assignment", "solve_lp", "solve_milp",
    "validate_plan", "write_trace", "zoh_discretize",
]

"""Receding-horizon closed loop over the planning MILPs."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bnb import MilpStatus, SolverOptions, solve_milp
from .formulation import (ClusterAssignment, Mode, Plan, Scenario, assignment_from_plan, build_model,
                          check_initial_state, decode_plan, seed_assignment, shifted_plan,
                          validate_plan)

__all__ = ["StepRecord", "Trace", "predicted_cost", "run_receding_horizon", "same_partition"]


def predicted_cost(J_star: float, u0, gamma: float) -> float:
    """Cost the previous plan promises for the next step: ``J* - 1 - gamma * |u0|_1``."""
    return float(J_star) - 1.0 - float(gamma) * float(np.abs(np.asarray(u0, dtype=float)).sum())


def same_partition(a: Optional[ClusterAssignment], b: Optional[ClusterAssignment]) -> bool:
    """True when both assignments group the obstacles identically, ignoring cluster labels."""
    if a is None or b is None:
        return a is None and b is None

    def groups(info):
        return {frozenset(info.members(l)) for l in range(info.n_clusters)} - {frozenset()}

    return groups(a) == groups(b)


@dataclass
class StepRecord:
    k: int
    state: np.ndarray
    applied_control: np.ndarray
    J_star: float
    J_hat_next: float
    arrival_step: int
    solve_time: float
    nodes_explored: int
    cluster_info: Optional[ClusterAssignment] = None
    #: the solver stopped on a node or time limit and its incumbent was applied
    limit_reached: bool = False
    #: the obstacle grouping differs from the previous step's (always False at k = 0)
    assignment_changed: bool = False
    plan: Optional[Plan] = field(default=None, repr=False)


@dataclass
class Trace:
    mode: Mode
    steps: list = field(default_factory=list)
    final_state: Optional[np.ndarray] = None
    reached_target: bool = False
    #: ``reached``, ``infeasible``, ``limit`` (no incumbent), ``invalid_plan`` or ``max_steps``
    status: str = "reached"
    message: str = ""
    #: effort weight used for :attr:`closed_loop_cost`
    gamma: float = 1.0

    @property
    def closed_loop_cost(self) -> float:
        return float(sum(1.0 + self.gamma * np.abs(s.applied_control).sum() for s in self.steps))

    @property
    def total_solve_time(self) -> float:
        return float(sum(s.solve_time for s in self.steps))

    @property
    def total_nodes(self) -> int:
        return int(sum(s.nodes_explored for s in self.steps))

    @property
    def states(self) -> np.ndarray:
        """Executed states, including the final one, shape ``(len(steps) + 1, 4)``."""
        rows = [s.state for s in self.steps]
        if self.final_state is not None:
            rows.append(self.final_state)
        return np.array(rows, dtype=float).reshape(-1, 4)

    @property
    def controls(self) -> np.ndarray:
        return np.array([s.applied_control for s in self.steps], dtype=float).reshape(-1, 2)


def run_receding_horizon(scn: Scenario, x0=None, mode: Mode | None = None,
                         opts: SolverOptions | None = None, max_steps: int = 200,
                         warm_start: bool = True,
                         on_step: Optional[Callable[[StepRecord], None]] = None) -> Trace:
    """Re-plan from every measured state and apply the first control until arrival.

    With ``warm_start`` the first solve is seeded by :func:`seed_assignment`
    and every later one by the previous plan shifted by one step, which is
    always feasible under nominal dynamics.  The recorded solve time covers
    model construction, seeding and branch-and-bound.
    """
    mode = mode or Mode.unclustered()
    opts = opts or SolverOptions()
    if max_steps < 0:
        raise ValueError("max_steps must be non-negative")
    x = check_initial_state(scn, scn.x0 if x0 is None else x0).copy()
    trace = Trace(mode, gamma=scn.gamma)
    A, B = scn.dynamics.A, scn.dynamics.B
    prev: Optional[Plan] = None
    for k in range(max_steps + 1):
        if scn.in_terminal(x):
            trace.final_state, trace.reached_target, trace.status = x, True, "reached"
            return trace
        if k == max_steps:
            break
        t0 = time.perf_counter()
        model = build_model(scn, x, mode)
        seed = None
        if warm_start and prev is None:
            seed = seed_assignment(model, scn)
        elif warm_start:
            shifted = shifted_plan(prev, scn)
            if shifted is not None:
                info = prev.cluster_info
                seed = assignment_from_plan(model, scn, *shifted,
                                            clusters=None if info is None else info.clusters,
                                            assignment=None if info is None else info.assignment)
        out = solve_milp(model, opts, warm_start=seed)
        elapsed = time.perf_counter() - t0
        if out.x is None:
            trace.final_state = x
            trace.status = "infeasible" if out.status is MilpStatus.INFEASIBLE else "limit"
            trace.message = f"step {k}: solver returned {out.status.value} without a plan"
            return trace
        plan = decode_plan(model, out, scn, mode)
        report = validate_plan(plan, scn)
        if not report.ok:
            trace.final_state = x
            trace.status = "invalid_plan"
            trace.message = f"step {k}: " + "; ".join(report.violations[:3])
            return trace
        u0 = plan.controls[0].copy()
        J = float(out.objective_value)
        rec = StepRecord(k, x.copy(), u0, J, predicted_cost(J, u0, scn.gamma), plan.arrival_step,
                         elapsed, out.nodes_explored, plan.cluster_info,
                         limit_reached=out.status is MilpStatus.LIMIT_REACHED,
                         assignment_changed=prev is not None and mode.is_clustered
                         and not same_partition(prev.cluster_info, plan.cluster_info),
                         plan=plan)
        trace.steps.append(rec)
        if on_step is not None:
            on_step(rec)
        x = A @ x + B @ u0
        prev = plan
        if plan.arrival_step == 1:
            trace.final_state = x
            trace.reached_target = scn.in_terminal(x)
            trace.status = "reached" if trace.reached_target else "invalid_plan"
            return trace
    trace.final_state = x
    trace.status = "max_steps"
    trace.message = f"terminal set not reached within {max_steps} steps"
    return trace

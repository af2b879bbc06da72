"""Solve one planning problem on the desk scenario and draw the plan.

Usage::

    python demos/plan_once.py [clusters] [out.svg]
"""
import sys

from clusterplan import (Mode, build_model, builtin_scenario, decode_plan, render_svg, seed_assignment,
                         solve_milp, validate_plan)
from clusterplan.simulator import StepRecord, Trace


def main(clusters: int = 2, svg_path: str = "plan.svg") -> None:
    scn = builtin_scenario("desk")
    mode = Mode.clustered(clusters) if clusters > 0 else Mode.unclustered()
    model = build_model(scn, scn.x0, mode)
    out = solve_milp(model, warm_start=seed_assignment(model, scn))
    plan = decode_plan(model, out, scn, mode)
    print(f"{mode.label}: {out.status.value}, J* = {out.objective_value:.6f}, arrival at step {plan.arrival_step}, "
          f"{out.nodes_explored} nodes, certified = {validate_plan(plan, scn).ok}")
    if plan.cluster_info is not None:
        for l, rect in enumerate(plan.cluster_info.clusters):
            print(f"  cluster {l + 1}: {rect.as_list()} members {plan.cluster_info.members(l)}")
    trace = Trace(mode, gamma=scn.gamma)
    for k in range(plan.arrival_step):
        trace.steps.append(StepRecord(k, plan.states[k], plan.controls[k], out.objective_value, 0.0,
                                      plan.arrival_step - k, 0.0, 0, plan.cluster_info))
    trace.final_state = plan.states[plan.arrival_step]
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(scn, trace, title=f"desk {mode.label}"))
    print(f"wrote {svg_path}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2, sys.argv[2] if len(sys.argv) > 2 else "plan.svg")

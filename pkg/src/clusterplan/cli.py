"""Command-line entry point: ``clusterplan {solve,simulate,benchmark,render}``.

Exit codes
----------
0  success
1  bad scenario or invocation
2  ``solve``: the problem is infeasible
3  ``solve``: a node or time limit stopped the search
4  ``simulate``: the run ended without reaching the target
5  ``benchmark``: at least one mode failed
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bnb import MilpStatus, SolverOptions, solve_milp
from .formulation import Mode, Rect, Scenario, ScenarioError, build_model, count_binaries, decode_plan, \
    seed_assignment, validate_plan
from .scenario_io import (dump_scenario, load_scenario_file, read_trace, render_svg, synthesize_obstacles,
                          trace_from_rows, write_trace)
from .simulator import StepRecord, Trace, run_receding_horizon

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3
EXIT_RUN_FAILED = 4
EXIT_BENCHMARK_FAILED = 5

REPORT_SCHEMA = "clusterplan.benchmark/1"


class _Usage(Exception):
    """Invocation problem reported with exit code 1."""


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="scenario JSON file or builtin:<name> (desk, desk_open, field45)")
    p.add_argument("--random-obstacles", type=int, metavar="N", default=None,
                   help="replace the scenario's obstacles with N synthesized ones")
    p.add_argument("--seed", type=int, default=0, help="seed for --random-obstacles (default 0)")
    p.add_argument("--horizon", type=_positive_int, default=None, metavar="NS",
                   help="override the scenario's maximal horizon")


def _add_mode_args(p: argparse.ArgumentParser, required: bool) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--unclustered", action="store_true", help="one set of side binaries per obstacle")
    g.add_argument("--clusters", type=_positive_int, metavar="N", help="group obstacles into N clusters")


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gap", type=_positive_float, default=1e-6, help="relative optimality gap (default 1e-6)")
    p.add_argument("--node-limit", type=_positive_int, default=1_000_000, help="nodes per solve")
    p.add_argument("--time-limit", type=_positive_float, default=None, help="seconds per solve")
    p.add_argument("--log", metavar="PATH", default=None, help="write the branch-and-bound event log here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clusterplan",
                                     description="MILP trajectory planning with obstacle clustering.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the open-loop planning problem once")
    _add_scenario_args(p)
    _add_mode_args(p, required=True)
    _add_solver_args(p)
    p.add_argument("--lp-out", metavar="PATH", help="write the model in the LP-text dump format")
    p.add_argument("--report-out", metavar="PATH", help="write the plan as JSON")
    p.add_argument("--svg-out", metavar="PATH", help="draw the planned trajectory")

    p = sub.add_parser("simulate", help="run the receding-horizon closed loop")
    _add_scenario_args(p)
    _add_mode_args(p, required=True)
    _add_solver_args(p)
    p.add_argument("--max-steps", type=int, default=200, help="closed-loop step limit (default 200)")
    p.add_argument("--trace-out", metavar="PATH", help="write the executed trace as CSV")
    p.add_argument("--svg-out", metavar="PATH", help="draw the executed trajectory")
    p.add_argument("--svg-step", type=int, default=None, metavar="K", help="step whose clusters are drawn")
    p.add_argument("--report-out", metavar="PATH", help="write a run summary as JSON")

    p = sub.add_parser("benchmark", help="compare planning modes in closed loop")
    _add_scenario_args(p)
    _add_solver_args(p)
    p.add_argument("--modes", default="unclustered,2,3",
                   help="comma-separated modes: unclustered or a cluster count (default unclustered,2,3)")
    p.add_argument("--repeat", type=_positive_int, default=1, help="runs per mode (default 1)")
    p.add_argument("--max-steps", type=int, default=200, help="closed-loop step limit (default 200)")
    p.add_argument("--report-out", metavar="PATH", help="write the benchmark report as JSON")

    p = sub.add_parser("render", help="draw a scenario and optionally a trace CSV")
    _add_scenario_args(p)
    p.add_argument("--trace-in", metavar="PATH", help="trace CSV written by simulate")
    p.add_argument("--svg-out", metavar="PATH", help="output file (default: standard output)")
    p.add_argument("--dump-scenario", metavar="PATH", help="also write the (possibly synthesized) scenario")
    return parser


# ---------------------------------------------------------------------------------------------
# helpers

def _load(args) -> Scenario:
    scn = load_scenario_file(args.scenario)
    if args.random_obstacles is not None:
        if args.random_obstacles < 0:
            raise _Usage("--random-obstacles must be non-negative")
        keep = [scn.terminal_rect()]
        if scn.x0 is not None:
            keep.append(Rect(scn.x0[0] - 0.5, scn.x0[2] - 0.5, scn.x0[0] + 0.5, scn.x0[2] + 0.5))
        obstacles = synthesize_obstacles(args.random_obstacles, scn.workspace, keep, seed=args.seed)
        scn = scn.replace(obstacles=obstacles, name=f"{scn.name}+random{args.random_obstacles}s{args.seed}")
    if getattr(args, "horizon", None) is not None:
        scn = scn.replace(Ns=args.horizon)
    if scn.x0 is None:
        raise _Usage("scenario has no x0")
    return scn


def _mode(args) -> Mode:
    return Mode.clustered(args.clusters) if args.clusters is not None else Mode.unclustered()


def _options(args, log_stream=None) -> SolverOptions:
    return SolverOptions(rel_gap=args.gap, node_limit=args.node_limit, time_limit=args.time_limit,
                         log=log_stream)


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _binaries(mode: Mode, scn: Scenario) -> int:
    return count_binaries(mode, scn.Ns, scn.n_obstacles)


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


# ---------------------------------------------------------------------------------------------
# subcommands

def cmd_solve(args, out) -> int:
    scn = _load(args)
    mode = _mode(args)
    log = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        t0 = time.perf_counter()
        model = build_model(scn, scn.x0, mode)
        seed = seed_assignment(model, scn)
        outcome = solve_milp(model, _options(args, log), warm_start=seed)
        elapsed = time.perf_counter() - t0
    finally:
        if log is not None:
            log.close()
    if args.lp_out:
        _write(args.lp_out, model.to_lp_text())
    status = outcome.status
    print(f"status: {status.value}", file=out)
    print(f"mode: {mode.label}", file=out)
    print(f"binaries: {_binaries(mode, scn)} avoidance, {model.count_binaries()} in model", file=out)
    print(f"solve_time: {elapsed:.3f} s", file=out)
    print(f"nodes: {outcome.nodes_explored}", file=out)
    report = {"scenario": scn.name, "mode": mode.label, "status": status.value,
              "binaries": _binaries(mode, scn), "model_binaries": model.count_binaries(),
              "solve_time": elapsed, "nodes": outcome.nodes_explored, "best_bound": outcome.best_bound,
              "J_star": None, "arrival_step": None}
    plan = None
    if outcome.x is not None:
        plan = decode_plan(model, outcome, scn, mode)
        certified = validate_plan(plan, scn).ok
        print(f"J*: {outcome.objective_value:.10g}", file=out)
        print(f"arrival_step: {plan.arrival_step}", file=out)
        print(f"certified: {'yes' if certified else 'no'}", file=out)
        report.update(J_star=outcome.objective_value, arrival_step=plan.arrival_step, certified=certified,
                      states=plan.states.tolist(), controls=plan.controls.tolist())
        if plan.cluster_info is not None:
            report["clusters"] = [{"rect": c.as_list(), "members": [i + 1 for i in plan.cluster_info.members(l)]}
                                  for l, c in enumerate(plan.cluster_info.clusters)]
    if args.report_out:
        _write(args.report_out, json.dumps(report, indent=2) + "\n")
    if args.svg_out:
        trace = None
        if plan is not None:
            trace = Trace(mode, gamma=scn.gamma)
            for k in range(plan.arrival_step):
                trace.steps.append(StepRecord(k, plan.states[k], plan.controls[k], np.nan, np.nan,
                                              plan.arrival_step - k, 0.0, 0, plan.cluster_info))
            trace.final_state = plan.states[plan.arrival_step]
        _write(args.svg_out, render_svg(scn, trace, title=f"{scn.name} {mode.label} plan"))
    if status is MilpStatus.OPTIMAL:
        return EXIT_OK
    if status is MilpStatus.LIMIT_REACHED:
        return EXIT_LIMIT
    return EXIT_INFEASIBLE


def _run_summary(trace: Trace, mode: Mode, scn: Scenario) -> dict:
    return {
        "mode": mode.label,
        "status": trace.status,
        "reached_target": trace.reached_target,
        "steps": len(trace.steps),
        "closed_loop_cost": trace.closed_loop_cost,
        "total_solve_time": trace.total_solve_time,
        "total_nodes": trace.total_nodes,
        "limit_steps": sum(1 for s in trace.steps if s.limit_reached),
        "assignment_changes": sum(1 for s in trace.steps if s.assignment_changed),
        "binaries": _binaries(mode, scn),
        "message": trace.message,
    }


def cmd_simulate(args, out) -> int:
    scn = _load(args)
    mode = _mode(args)
    if args.max_steps < 0:
        raise _Usage("--max-steps must be non-negative")
    log = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        trace = run_receding_horizon(scn, scn.x0, mode, _options(args, log), max_steps=args.max_steps)
    finally:
        if log is not None:
            log.close()
    if args.trace_out:
        _write(args.trace_out, write_trace(trace))
    if args.svg_out:
        step = args.svg_step
        if step is not None and not 0 <= step < len(trace.steps):
            raise _Usage(f"--svg-step {step} outside 0..{len(trace.steps) - 1}")
        _write(args.svg_out, render_svg(scn, trace, cluster_step=step, title=f"{scn.name} {mode.label}"))
    summary = _run_summary(trace, mode, scn)
    if args.report_out:
        _write(args.report_out, json.dumps({"scenario": scn.name, **summary}, indent=2) + "\n")
    print(f"{mode.label}: status={trace.status} steps={len(trace.steps)} "
          f"closed_loop_cost={trace.closed_loop_cost:.6g} total_solve_time={trace.total_solve_time:.3f} s",
          file=out)
    if trace.message:
        print(trace.message, file=out)
    return EXIT_OK if trace.reached_target else EXIT_RUN_FAILED


def benchmark_table(report: dict) -> str:
    """Plain-text rendering of a benchmark report."""
    header = f"{'mode':<14} {'binaries':>8} {'time [s]':>10} {'time %':>7} {'cost':>10} {'cost %':>7} " \
             f"{'nodes':>7} {'steps':>5}  status"
    lines = [f"scenario {report['scenario']}: {report['obstacles']} obstacles, Ns = {report['Ns']}, "
             f"{report['repeat']} run(s) per mode (median time)", header, "-" * len(header)]
    for row in report["summary"]:
        lines.append(f"{row['mode']:<14} {row['binaries']:>8} {row['median_solve_time']:>10.3f} "
                     f"{_fmt(row['time_percent'], 1):>7} {row['closed_loop_cost']:>10.4f} "
                     f"{_fmt(row['cost_percent'], 1):>7} {row['total_nodes']:>7} {row['steps']:>5}  "
                     f"{row['status']}")
    return "\n".join(lines)


def run_benchmark(scn: Scenario, modes: Sequence[Mode], opts: SolverOptions, repeat: int = 1,
                  max_steps: int = 200) -> dict:
    """Closed-loop runs of every mode; the result follows the documented report schema."""
    runs, summary = [], []
    for mode in modes:
        mode_runs = []
        for r in range(repeat):
            try:
                trace = run_receding_horizon(scn, scn.x0, mode, opts, max_steps=max_steps)
                row = _run_summary(trace, mode, scn)
            except Exception as exc:  # recorded, not raised: one mode failing must not hide the others
                row = {"mode": mode.label, "status": "error", "reached_target": False, "steps": 0,
                       "closed_loop_cost": None, "total_solve_time": None, "total_nodes": None,
                       "limit_steps": 0, "assignment_changes": 0, "binaries": _binaries(mode, scn),
                       "message": f"{type(exc).__name__}: {exc}"}
            row["repeat"] = r
            runs.append(row)
            mode_runs.append(row)
        first = mode_runs[0]
        times = [row["total_solve_time"] for row in mode_runs if row["total_solve_time"] is not None]
        ok = all(row["reached_target"] for row in mode_runs)
        summary.append({"mode": mode.label, "binaries": first["binaries"],
                        "median_solve_time": float(np.median(times)) if times else float("nan"),
                        "closed_loop_cost": first["closed_loop_cost"] if first["closed_loop_cost"] is not None
                        else float("nan"),
                        "total_nodes": first["total_nodes"] if first["total_nodes"] is not None else 0,
                        "steps": first["steps"], "status": "ok" if ok else "failed",
                        "time_percent": None, "cost_percent": None})
    ref = next((row for row in summary if row["mode"] == "unclustered" and row["status"] == "ok"), None)
    if ref is not None:
        for row in summary:
            if row["status"] == "ok":
                if ref["median_solve_time"] > 0:
                    row["time_percent"] = 100.0 * row["median_solve_time"] / ref["median_solve_time"]
                if ref["closed_loop_cost"] > 0:
                    row["cost_percent"] = 100.0 * row["closed_loop_cost"] / ref["closed_loop_cost"]
    return {"schema": REPORT_SCHEMA, "scenario": scn.name, "obstacles": scn.n_obstacles, "Ns": scn.Ns,
            "repeat": repeat,
            "options": {"gap": opts.rel_gap, "node_limit": opts.node_limit, "time_limit": opts.time_limit,
                        "max_steps": max_steps},
            "runs": runs, "summary": summary, "ok": all(row["status"] == "ok" for row in summary)}


def cmd_benchmark(args, out) -> int:
    scn = _load(args)
    try:
        modes = [Mode.parse(text) for text in args.modes.split(",") if text.strip()]
    except ValueError as exc:
        raise _Usage(f"bad --modes value {args.modes!r}: {exc}") from None
    if not modes:
        raise _Usage("--modes lists no mode")
    if args.max_steps < 0:
        raise _Usage("--max-steps must be non-negative")
    log = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        report = run_benchmark(scn, modes, _options(args, log), args.repeat, args.max_steps)
    finally:
        if log is not None:
            log.close()
    print(benchmark_table(report), file=out)
    if args.report_out:
        _write(args.report_out, json.dumps(report, indent=2) + "\n")
    return EXIT_OK if report["ok"] else EXIT_BENCHMARK_FAILED


def cmd_render(args, out) -> int:
    scn = _load(args)
    trace = None
    if args.trace_in:
        try:
            with open(args.trace_in, encoding="utf-8") as fh:
                rows = read_trace(fh.read())
        except OSError as exc:
            raise _Usage(f"cannot read trace {args.trace_in!r}: {exc}") from None
        trace = trace_from_rows(rows, scn)
    svg = render_svg(scn, trace, title=scn.name)
    if args.svg_out:
        _write(args.svg_out, svg)
    else:
        out.write(svg)
    if args.dump_scenario:
        _write(args.dump_scenario, dump_scenario(scn))
    return EXIT_OK


_COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "benchmark": cmd_benchmark, "render": cmd_render}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    """Run the CLI and return its exit code (argparse usage errors also map to 1)."""
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_BAD_INPUT
    try:
        return _COMMANDS[args.command](args, out)
    except (ScenarioError, _Usage, ValueError, IndexError) as exc:
        print(f"clusterplan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"clusterplan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


def main_entry() -> None:
    """Console-script wrapper around :func:`main`."""
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()

import io
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from clusterplan.bnb import MilpStatus, SolverOptions, solve_milp
from clusterplan.model import MilpModel, ModelError
from oracles import brute_force_milp, random_milp

WEIGHTS = [12, 7, 11, 8, 9, 6, 5, 14]
VALUES = [24, 13, 23, 15, 16, 11, 9, 25]


def knapsack(capacity=40):
    m = MilpModel("knap")
    x = [m.add_binary(f"x{i}") for i in range(len(WEIGHTS))]
    m.add_constraint(list(zip(x, WEIGHTS)), "<=", capacity, name="cap")
    m.set_objective([(xi, -vi) for xi, vi in zip(x, VALUES)])
    return m


def parse_log(text):
    return [dict(kv.split("=", 1) for kv in line.split()) for line in text.splitlines()]


def test_knapsack_against_enumeration():
    # brute-force optimum: items 0, 2, 3, 4 with value 78
    out = solve_milp(knapsack())
    assert out.status is MilpStatus.OPTIMAL
    assert out.objective_value == pytest.approx(-78.0, abs=1e-9)
    assert np.round(out.x).tolist() == [1, 0, 1, 1, 1, 0, 0, 0]
    assert out.best_bound <= out.objective_value + 1e-9


@pytest.mark.parametrize("tie_break", ["fifo", "deepest"])
@pytest.mark.parametrize("heuristics", [True, False])
def test_option_variants_agree(tie_break, heuristics):
    opts = SolverOptions(tie_break=tie_break, rounding_heuristic=heuristics, purify=heuristics,
                         dive_every=20 if heuristics else 0)
    assert solve_milp(knapsack(), opts).objective_value == pytest.approx(-78.0, abs=1e-9)


def test_integer_infeasible_with_feasible_relaxation():
    m = MilpModel()
    b = [m.add_binary(f"b{i}") for i in range(4)]
    m.add_constraint([(h, 2.0) for h in b], "==", 3.0)
    out = solve_milp(m)
    assert out.status is MilpStatus.INFEASIBLE and out.x is None
    assert out.nodes_explored > 1


def test_unbounded_milp():
    m = MilpModel()
    b = m.add_binary("b")
    y = m.add_continuous("y", 0)
    m.add_constraint([(y, 1), (b, -1)], ">=", 0)
    m.set_objective([(y, -1), (b, 1)])
    assert solve_milp(m).status is MilpStatus.UNBOUNDED


def test_unbounded_relaxation_without_integer_point_is_infeasible():
    m = MilpModel()
    b = [m.add_binary(f"b{i}") for i in range(2)]
    y = m.add_continuous("y", 0)
    m.add_constraint([(b[0], 2), (b[1], 2)], "==", 1)
    m.set_objective([(y, -1)])
    assert solve_milp(m).status is MilpStatus.INFEASIBLE


def test_pure_lp_model():
    m = MilpModel()
    a = m.add_continuous("a", 0, 4)
    m.set_objective([(a, -1)], constant=2)
    out = solve_milp(m)
    assert out.status is MilpStatus.OPTIMAL and out.objective_value == pytest.approx(-2.0)


def test_node_limit_reports_incumbent_and_bound():
    m = random_milp(59)          # 10 binaries
    full = solve_milp(m)
    out = solve_milp(m, SolverOptions(node_limit=1, rounding_heuristic=False, dive_every=0, purify=False))
    assert out.status in (MilpStatus.LIMIT_REACHED, MilpStatus.OPTIMAL)
    assert out.nodes_explored <= 1
    assert out.best_bound <= full.objective_value + 1e-9
    if out.x is not None:
        assert m.is_feasible(out.x) and out.objective_value >= full.objective_value - 1e-9


def test_time_limit_stops_search():
    m = MilpModel()
    b = [m.add_binary(f"b{i}") for i in range(12)]
    m.add_constraint([(h, 2.0) for h in b], "==", 7.0)
    out = solve_milp(m, SolverOptions(time_limit=1e-3))
    assert out.status in (MilpStatus.LIMIT_REACHED, MilpStatus.INFEASIBLE)
    assert out.x is None


def test_warm_start_is_used_when_feasible():
    buf = io.StringIO()
    m = knapsack()
    seed = np.array([1, 0, 1, 1, 1, 0, 0, 0], float)
    out = solve_milp(m, SolverOptions(log=buf), warm_start=seed)
    events = parse_log(buf.getvalue())
    assert events[0] == {"event": "incumbent", "node": "0", "objective": "-78", "source": "warm_start"}
    assert events[-1]["event"] == "done" and events[-1]["status"] == "optimal"
    assert out.objective_value == pytest.approx(-78.0)


def test_infeasible_warm_start_is_ignored():
    lines = []
    out = solve_milp(knapsack(), SolverOptions(log=lines.append), warm_start=np.ones(8))
    assert all("warm_start" not in line for line in lines)
    assert out.objective_value == pytest.approx(-78.0)


def test_log_events_are_well_formed():
    lines = []
    solve_milp(random_milp(7), SolverOptions(log=lines.append))
    events = parse_log("\n".join(lines))
    kinds = {e["event"] for e in events}
    assert kinds <= {"incumbent", "reject", "branch", "prune", "infeasible", "dive", "done"}
    assert events[-1]["event"] == "done"
    for e in events:
        if e["event"] == "branch":
            assert {"node", "depth", "lp", "var", "value", "incumbent", "open"} <= set(e)


def test_bound_history_is_monotone():
    out = solve_milp(knapsack(37), SolverOptions(rounding_heuristic=False, dive_every=0))
    hist = np.array(out.bound_history)
    finite = hist[np.isfinite(hist)]
    assert np.all(np.diff(finite) >= -1e-9)


@pytest.mark.parametrize("kwargs", [
    dict(rel_gap=0.0), dict(abs_gap=-1.0), dict(integrality_tol=0.0), dict(node_limit=0),
    dict(time_limit=0.0), dict(dive_every=-1), dict(branching="pseudocost"),
    dict(tie_break="lifo"), dict(node_selection="depth_first"),
])
def test_bad_options(kwargs):
    with pytest.raises(ValueError):
        SolverOptions(**kwargs)


def test_rejects_non_models():
    with pytest.raises(ModelError):
        solve_milp("model")


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(min_value=1000, max_value=10**6))
def test_small_random_milps_match_brute_force(seed):
    m = random_milp(seed, max_binaries=5, max_continuous=4)
    ref = brute_force_milp(m)
    out = solve_milp(m)
    assert out.status.value == ref.status
    if ref.status == "optimal":
        assert out.objective_value == pytest.approx(ref.objective, abs=1e-6)
        assert m.is_feasible(out.x)
        assert math.isclose(m.objective_value(out.x), out.objective_value, abs_tol=1e-6)


def test_near_integral_fixed_binary_does_not_stall():
    # the relaxation leaves a fixed binary at 7.7e-8 on an instance with no integer point
    out = solve_milp(random_milp(2074, 6, 6), SolverOptions(node_limit=200))
    assert out.status is MilpStatus.INFEASIBLE
    assert out.nodes_explored < 20

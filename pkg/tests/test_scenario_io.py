import json

import numpy as np
import pytest

from clusterplan import Mode, Rect, run_receding_horizon
from clusterplan.scenario_io import (BUILTIN_SCENARIOS, TRACE_COLUMNS, ScenarioFormatError, builtin_scenario,
                                     dump_scenario, load_scenario, load_scenario_file, read_trace,
                                     render_svg, scenario_to_dict, synthesize_obstacles, trace_from_rows,
                                     write_trace)

BASE = {
    "workspace": [-1, -1, 16, 12],
    "obstacles": [[5, 5, 6, 6]],
    "terminal_box": {"position": [14, 0, 15, 1], "v_eps": 0.005},
    "x0": [0, 0, 10, 0],
    "Ts": 0.8, "Ns": 12, "gamma": 1.0, "v_max": 10, "a_max": 3,
}


def doc(**changes):
    d = json.loads(json.dumps(BASE))
    for k, v in changes.items():
        if v is None:
            d.pop(k)
        else:
            d[k] = v
    return json.dumps(d, indent=2)


@pytest.fixture(scope="module")
def open_trace():
    scn = builtin_scenario("desk_open")
    return scn, run_receding_horizon(scn, mode=Mode.unclustered())


@pytest.fixture(scope="module")
def clustered_trace():
    scn = builtin_scenario("desk")
    return scn, run_receding_horizon(scn, mode=Mode.clustered(2))


# --- loading ---------------------------------------------------------------------------------------

def test_load_minimal_document():
    scn = load_scenario(doc())
    assert scn.Ns == 12 and len(scn.obstacles) == 1
    assert np.allclose(scn.terminal_lo, [14, -0.005, 0, -0.005])
    assert np.allclose(scn.terminal_hi, [15, 0.005, 1, 0.005])
    assert np.allclose(scn.dynamics.B, [[0.32, 0], [0.8, 0], [0, 0.32], [0, 0.8]])


def test_syntax_error_has_position():
    text = doc().replace('"Ns": 12', '"Ns": 12,,')
    with pytest.raises(ScenarioFormatError) as err:
        load_scenario(text)
    line = next(i for i, l in enumerate(text.splitlines(), 1) if ",," in l)
    assert err.value.line == line and err.value.column is not None
    assert f"line {line}" in str(err.value)


@pytest.mark.parametrize("key", ["workspace", "obstacles", "terminal_box", "x0", "Ts", "Ns", "gamma",
                                 "v_max", "a_max"])
def test_missing_field_is_named(key):
    with pytest.raises(ScenarioFormatError) as err:
        load_scenario(doc(**{key: None}))
    assert err.value.field == key and key in str(err.value)


@pytest.mark.parametrize("changes, field", [
    (dict(obstacles=[[5, 5, 4, 6]]), "obstacles[0]"),
    (dict(Ns=0), "Ns"),
    (dict(Ns=2.5), "Ns"),
    (dict(Ts=-1), "Ts"),
    (dict(x0=[0, 0, 10]), "x0"),
    (dict(gamma="1"), "gamma"),
    (dict(terminal_box={"position": [14, 0, 15, 1], "v_eps": -1}), "terminal_box.v_eps"),
    (dict(terminal_box=[14, 0, 15, 1]), "terminal_box"),
    (dict(extra=1), "extra"),
])
def test_malformed_field_is_named(changes, field):
    with pytest.raises(ScenarioFormatError) as err:
        load_scenario(doc(**changes))
    assert err.value.field == field


@pytest.mark.parametrize("changes", [
    dict(obstacles=[[14.5, 0.5, 16, 1.5]]),       # overlaps the terminal box
    dict(obstacles=[[-0.5, 9.5, 0.5, 10.5]]),     # contains the start
    dict(obstacles=[[15, 5, 17, 6]]),             # leaves the workspace
])
def test_invariant_violations(changes):
    with pytest.raises(ScenarioFormatError):
        load_scenario(doc(**changes))


def test_non_object_and_unreadable(tmp_path):
    with pytest.raises(ScenarioFormatError):
        load_scenario("[1, 2]")
    with pytest.raises(ScenarioFormatError):
        load_scenario_file(tmp_path / "missing.json")
    with pytest.raises(ScenarioFormatError):
        builtin_scenario("nope")


def test_builtins_load():
    counts = {name: len(builtin_scenario(name).obstacles) for name in BUILTIN_SCENARIOS}
    assert counts == {"desk": 9, "desk_open": 0, "field45": 45}
    assert builtin_scenario("field45").Ns == 18
    assert load_scenario_file("builtin:desk").obstacles == builtin_scenario("desk").obstacles


def test_round_trip(tmp_path):
    for name in BUILTIN_SCENARIOS:
        scn = builtin_scenario(name)
        back = load_scenario(dump_scenario(scn))
        assert back.obstacles == scn.obstacles and back.Ns == scn.Ns
        assert np.array_equal(back.terminal_lo, scn.terminal_lo)
        assert np.array_equal(back.terminal_hi, scn.terminal_hi)
        assert np.array_equal(back.dynamics.A, scn.dynamics.A)
        assert scenario_to_dict(back) == scenario_to_dict(scn)
    path = tmp_path / "s.json"
    path.write_text(dump_scenario(builtin_scenario("desk")))
    assert load_scenario_file(path).name == "desk"


def test_synthesized_obstacles_are_deterministic_and_disjoint():
    ws = Rect(-1, -1, 16, 12)
    clear = [Rect(13.5, -0.5, 15.5, 1.5)]
    a = synthesize_obstacles(30, ws, clear, seed=7)
    assert a == synthesize_obstacles(30, ws, clear, seed=7)
    assert a != synthesize_obstacles(30, ws, clear, seed=8)
    for i, r in enumerate(a):
        assert ws.contains_rect(r)
        assert not r.interiors_overlap(clear[0])
        assert not any(r.interiors_overlap(o) for o in a[i + 1:])


# --- trace CSV -------------------------------------------------------------------------------------

def test_csv_header_only_for_empty_trace(desk_open):
    trace = run_receding_horizon(desk_open, max_steps=0)
    text = write_trace(trace)
    assert text == ",".join(TRACE_COLUMNS) + "\n"
    assert read_trace(text) == []


def test_csv_round_trip(open_trace):
    scn, trace = open_trace
    text = write_trace(trace)
    assert len(text.splitlines()) == len(trace.steps) + 1
    rows = read_trace(text)
    for row, rec in zip(rows, trace.steps):
        assert row.k == rec.k and row.nodes == rec.nodes_explored
        assert np.array_equal(row.state, rec.state)
        assert np.array_equal(row.control, rec.applied_control)
        assert row.J_star == rec.J_star and row.J_hat_next == rec.J_hat_next
    rebuilt = trace_from_rows(rows, scn)
    assert rebuilt.reached_target
    assert np.allclose(rebuilt.states, trace.states, atol=1e-12)


@pytest.mark.parametrize("text", [
    "",
    "k,r_x\n",
    ",".join(TRACE_COLUMNS) + "\n0,1,2\n",
    ",".join(TRACE_COLUMNS) + "\n0,0,0,0,0,0,0,1,1,0.1,1,maybe\n",
])
def test_csv_rejects_malformed(text):
    with pytest.raises(ValueError):
        read_trace(text)


# --- SVG -------------------------------------------------------------------------------------------

def test_svg_is_deterministic_and_complete(clustered_trace):
    scn, trace = clustered_trace
    svg = render_svg(scn, trace)
    assert svg == render_svg(scn, trace)
    assert svg.startswith('<?xml version="1.0" encoding="UTF-8"?>') and svg.rstrip().endswith("</svg>")
    assert svg.count('class="obstacle"') == len(scn.obstacles)
    assert svg.count('<rect id="cluster-') == 2
    assert svg.count("<circle ") == len(trace.steps) + 1
    assert svg.count('id="path"') == 1 and 'id="terminal"' in svg
    import xml.etree.ElementTree as ET
    ET.fromstring(svg.split("\n", 1)[1])


def test_svg_without_trace(desk):
    svg = render_svg(desk, title="a < b")
    assert "<circle" not in svg and "cluster-" not in svg
    assert "<title>a &lt; b</title>" in svg
    assert 'width="720" height="560"' in svg


def test_svg_cluster_step(clustered_trace):
    scn, trace = clustered_trace
    last = len(trace.steps) - 1
    assert render_svg(scn, trace, cluster_step=last).count('<rect id="cluster-') == 2
    with pytest.raises(IndexError):
        render_svg(scn, trace, cluster_step=last + 1)

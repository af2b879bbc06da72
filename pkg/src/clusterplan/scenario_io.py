"""Scenario documents, trace CSV files and SVG pictures.

All three formats are described field by field in the README.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Any, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .dynamics import double_integrator_2d, zoh_discretize
from .formulation import Rect, Scenario, ScenarioError

__all__ = [
    "ScenarioFormatError",
    "load_scenario",
    "load_scenario_file",
    "builtin_scenario",
    "BUILTIN_SCENARIOS",
    "scenario_to_dict",
    "dump_scenario",
    "synthesize_obstacles",
    "TRACE_COLUMNS",
    "TraceRow",
    "write_trace",
    "read_trace",
    "trace_from_rows",
    "render_svg",
]

BUILTIN_SCENARIOS = ("desk", "desk_open", "field45")

_REQUIRED = ("workspace", "obstacles", "terminal_box", "x0", "Ts", "Ns", "gamma", "v_max", "a_max")
_OPTIONAL = ("bigM_O", "bigM_C", "bigM_R", "bigM_T", "Nc", "name")


class ScenarioFormatError(ScenarioError):
    """A scenario document that cannot be turned into a :class:`Scenario`.

    ``field`` names the offending key when there is one; ``line`` and
    ``column`` locate JSON syntax errors.
    """

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.field = field
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------------------------
# loading

def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFormatError(f"field {name!r} must be a number, got {value!r}", name)
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioFormatError(f"field {name!r} must be finite, got {value!r}", name)
    return value


def _numbers(value: Any, name: str, length: Optional[int] = None) -> list[float]:
    if not isinstance(value, list):
        raise ScenarioFormatError(f"field {name!r} must be a list of numbers, got {value!r}", name)
    if length is not None and len(value) != length:
        raise ScenarioFormatError(f"field {name!r} must have {length} entries, got {len(value)}", name)
    return [_number(v, name) for v in value]


def _axis_limit(value: Any, name: str):
    if isinstance(value, list):
        return _numbers(value, name, 2)
    return _number(value, name)


def _rect(value: Any, name: str) -> Rect:
    coords = _numbers(value, name, 4)
    try:
        return Rect(*coords)
    except ScenarioError as exc:
        raise ScenarioFormatError(f"field {name!r}: {exc}", name) from None


def _terminal(value: Any) -> tuple[np.ndarray, np.ndarray]:
    name = "terminal_box"
    if not isinstance(value, dict):
        raise ScenarioFormatError(f"field {name!r} must be an object", name)
    if "position" in value:
        pos = _rect(value["position"], f"{name}.position")
        v_eps = _axis_limit(value.get("v_eps", 0.0), f"{name}.v_eps")
        v_eps = np.broadcast_to(np.asarray(v_eps, float), (2,))
        if np.any(v_eps < 0):
            raise ScenarioFormatError(f"field '{name}.v_eps' must be non-negative", f"{name}.v_eps")
        lo = np.array([pos.x_min, -v_eps[0], pos.y_min, -v_eps[1]])
        hi = np.array([pos.x_max, v_eps[0], pos.y_max, v_eps[1]])
        return lo, hi
    if "lo" in value and "hi" in value:
        return (np.array(_numbers(value["lo"], f"{name}.lo", 4)),
                np.array(_numbers(value["hi"], f"{name}.hi", 4)))
    raise ScenarioFormatError(f"field {name!r} needs either 'position' (+ 'v_eps') or 'lo' and 'hi'", name)


def scenario_from_dict(doc: Any) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario document must be a JSON object")
    for key in _REQUIRED:
        if key not in doc:
            raise ScenarioFormatError(f"missing required field {key!r}", key)
    unknown = sorted(set(doc) - set(_REQUIRED) - set(_OPTIONAL))
    if unknown:
        raise ScenarioFormatError(f"unknown field {unknown[0]!r}", unknown[0])
    workspace = _rect(doc["workspace"], "workspace")
    if not isinstance(doc["obstacles"], list):
        raise ScenarioFormatError("field 'obstacles' must be a list of rectangles", "obstacles")
    obstacles = [_rect(o, f"obstacles[{i}]") for i, o in enumerate(doc["obstacles"])]
    lo, hi = _terminal(doc["terminal_box"])
    Ts = _number(doc["Ts"], "Ts")
    if Ts <= 0:
        raise ScenarioFormatError("field 'Ts' must be positive", "Ts")
    Ns = doc["Ns"]
    if isinstance(Ns, bool) or not isinstance(Ns, int) or Ns < 1:
        raise ScenarioFormatError(f"field 'Ns' must be a positive integer, got {Ns!r}", "Ns")
    kwargs = {}
    for key in ("bigM_O", "bigM_C", "bigM_R", "bigM_T"):
        if doc.get(key) is not None:
            kwargs[key] = _number(doc[key], key)
    Nc = doc.get("Nc")
    if Nc is not None and (isinstance(Nc, bool) or not isinstance(Nc, int) or Nc < 1):
        raise ScenarioFormatError(f"field 'Nc' must be a positive integer, got {Nc!r}", "Nc")
    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        raise ScenarioFormatError("field 'name' must be a string", "name")
    try:
        return Scenario(
            dynamics=zoh_discretize(double_integrator_2d(), Ts),
            workspace=workspace,
            obstacles=obstacles,
            terminal_lo=lo,
            terminal_hi=hi,
            v_max=_axis_limit(doc["v_max"], "v_max"),
            a_max=_axis_limit(doc["a_max"], "a_max"),
            gamma=_number(doc["gamma"], "gamma"),
            Ns=Ns,
            x0=_numbers(doc["x0"], "x0", 4),
            Nc=Nc,
            name=name,
            **kwargs,
        )
    except ScenarioFormatError:
        raise
    except (ScenarioError, ValueError) as exc:
        raise ScenarioFormatError(str(exc)) from None


def load_scenario(text: str) -> Scenario:
    """Parse a JSON scenario document.

    Raises
    ------
    ScenarioFormatError
        On JSON syntax errors (with ``line``/``column``), missing or
        malformed fields (with ``field``) and scenario invariant
        violations.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                                  line=exc.lineno, column=exc.colno) from None
    except (TypeError, RecursionError) as exc:
        raise ScenarioFormatError(f"cannot parse scenario document: {exc}") from None
    return scenario_from_dict(doc)


def load_scenario_file(path) -> Scenario:
    """Load a scenario from ``path``; ``builtin:<name>`` selects a shipped scenario."""
    path = str(path)
    if path.startswith("builtin:"):
        return builtin_scenario(path.split(":", 1)[1])
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ScenarioFormatError(f"cannot read scenario file {path!r}: {exc}") from None
    return load_scenario(text)


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTIN_SCENARIOS:
        raise ScenarioFormatError(f"unknown built-in scenario {name!r}; choose from {', '.join(BUILTIN_SCENARIOS)}")
    text = resources.files("clusterplan").joinpath("data").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return load_scenario(text)


def scenario_to_dict(scn: Scenario) -> dict:
    """Inverse of :func:`load_scenario` (the terminal box is written in ``lo``/``hi`` form)."""
    doc = {
        "name": scn.name,
        "workspace": scn.workspace.as_list(),
        "obstacles": [o.as_list() for o in scn.obstacles],
        "terminal_box": {"lo": scn.terminal_lo.tolist(), "hi": scn.terminal_hi.tolist()},
        "x0": None if scn.x0 is None else scn.x0.tolist(),
        "Ts": scn.dynamics.Ts,
        "Ns": scn.Ns,
        "gamma": scn.gamma,
        "v_max": scn.v_max.tolist(),
        "a_max": scn.a_max.tolist(),
    }
    for key in ("bigM_O", "bigM_C", "bigM_R", "bigM_T", "Nc"):
        if getattr(scn, key) is not None:
            doc[key] = getattr(scn, key)
    return doc


def dump_scenario(scn: Scenario) -> str:
    return json.dumps(scenario_to_dict(scn), indent=2) + "\n"


def synthesize_obstacles(n: int, workspace: Rect, keep_clear: Sequence[Rect] = (), seed: int = 0,
                         size=(0.6, 1.4), gap: float = 0.3, max_tries: int = 100_000) -> list[Rect]:
    """Random non-overlapping obstacles inside ``workspace``.

    Rectangles keep ``gap`` from each other and from every ``keep_clear``
    region.  The draw is fully determined by ``seed``.
    """
    rng = np.random.default_rng(seed)
    out: list[Rect] = []
    lo, hi = size
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > max_tries:
            raise ScenarioError(f"could not place {n} obstacles (placed {len(out)})")
        w, h = rng.uniform(lo, hi, size=2)
        x = rng.uniform(workspace.x_min, workspace.x_max - w)
        y = rng.uniform(workspace.y_min, workspace.y_max - h)
        cand = Rect(round(x, 2), round(y, 2), round(x + w, 2), round(y + h, 2))
        grown = Rect(cand.x_min - gap, cand.y_min - gap, cand.x_max + gap, cand.y_max + gap)
        if any(grown.interiors_overlap(o) for o in out) or any(grown.interiors_overlap(c) for c in keep_clear):
            continue
        out.append(cand)
    return out


# ---------------------------------------------------------------------------------------------
# trace CSV

TRACE_COLUMNS = ("k", "r_x", "v_x", "r_y", "v_y", "a_x", "a_y", "J_star", "J_hat_next",
                 "solve_time", "nodes", "assignment_changed")


@dataclass
class TraceRow:
    k: int
    state: np.ndarray
    control: np.ndarray
    J_star: float
    J_hat_next: float
    solve_time: float
    nodes: int
    assignment_changed: bool


def _g(value: float) -> str:
    return format(float(value), ".17g")


def write_trace(trace) -> str:
    """CSV text with one row per executed step (header always present)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for s in trace.steps:
        writer.writerow([int(s.k), *(_g(v) for v in s.state), *(_g(v) for v in s.applied_control),
                         _g(s.J_star), _g(s.J_hat_next), _g(s.solve_time), int(s.nodes_explored),
                         "true" if s.assignment_changed else "false"])
    return buf.getvalue()


def read_trace(text: str) -> list[TraceRow]:
    """Parse CSV produced by :func:`write_trace`."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty trace document") from None
    if tuple(header) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace header {header!r}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(TRACE_COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(TRACE_COLUMNS)} fields, got {len(rec)}")
        if rec[11] not in ("true", "false"):
            raise ValueError(f"line {lineno}: assignment_changed must be true or false")
        vals = [float(v) for v in rec[1:11]]
        rows.append(TraceRow(int(rec[0]), np.array(vals[0:4]), np.array(vals[4:6]), vals[6], vals[7],
                             vals[8], int(rec[10]), rec[11] == "true"))
    return rows


def trace_from_rows(rows: Sequence[TraceRow], scn: Scenario):
    """Rebuild a drawable trace from parsed CSV rows.

    Cluster rectangles are not part of the CSV, so the result carries
    none; the final state is propagated from the last row's control.
    """
    from .formulation import Mode
    from .simulator import StepRecord, Trace

    trace = Trace(Mode.unclustered(), gamma=scn.gamma)
    for row in rows:
        trace.steps.append(StepRecord(row.k, row.state, row.control, row.J_star, row.J_hat_next, 0,
                                      row.solve_time, row.nodes, None,
                                      assignment_changed=row.assignment_changed))
    if rows:
        last = rows[-1]
        trace.final_state = scn.dynamics.A @ last.state + scn.dynamics.B @ last.control
        trace.reached_target = scn.in_terminal(trace.final_state)
    return trace


# ---------------------------------------------------------------------------------------------
# SVG

def _f(value: float) -> str:
    text = format(float(value), ".3f").rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def render_svg(scn: Scenario, trace=None, cluster_step: Optional[int] = None,
               scale: float = 40.0, margin: float = 20.0, title: Optional[str] = None) -> str:
    """SVG picture of the workspace, obstacles, terminal box, executed path and clusters.

    ``cluster_step`` picks the step whose cluster rectangles are drawn;
    it defaults to step 0 for clustered traces.  Element ids:
    ``workspace``, ``terminal``, ``obstacle-<i>``, ``cluster-<l>``,
    ``path`` and ``step-<k>`` (all 1-based except ``k``).
    """
    steps = [] if trace is None else list(trace.steps)
    if cluster_step is not None and not 0 <= cluster_step < len(steps):
        raise IndexError(f"cluster_step {cluster_step} outside 0..{len(steps) - 1}")
    if cluster_step is None and steps and steps[0].cluster_info is not None:
        cluster_step = 0

    ws = scn.workspace
    width = ws.width * scale + 2 * margin
    height = ws.height * scale + 2 * margin

    def px(x):
        return margin + (x - ws.x_min) * scale

    def py(y):
        return margin + (ws.y_max - y) * scale

    def rect(eid, r, cls, x0=None, y0=None, x1=None, y1=None):
        x0 = r.x_min if x0 is None else x0
        y0 = r.y_min if y0 is None else y0
        x1 = r.x_max if x1 is None else x1
        y1 = r.y_max if y1 is None else y1
        return (f'<rect id="{eid}" class="{cls}" x="{_f(px(x0))}" y="{_f(py(y1))}" '
                f'width="{_f((x1 - x0) * scale)}" height="{_f((y1 - y0) * scale)}"/>')

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}">',
        "<style>"
        ".workspace{fill:#ffffff;stroke:#000000;stroke-width:1}"
        ".obstacle{fill:#8c8c8c;stroke:#404040;stroke-width:1}"
        ".terminal{fill:#b6e3b6;stroke:#2e7d32;stroke-width:1}"
        ".cluster{fill:none;stroke:#c62828;stroke-width:2;stroke-dasharray:6 3}"
        ".cluster.empty{stroke-opacity:0.35}"
        ".path{fill:none;stroke:#1565c0;stroke-width:2}"
        ".step{fill:#1565c0}"
        "</style>",
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(rect("workspace", ws, "workspace"))
    out.append(rect("terminal", scn.terminal_rect(), "terminal"))
    for i, obs in enumerate(scn.obstacles, start=1):
        out.append(rect(f"obstacle-{i}", obs, "obstacle"))
    if cluster_step is not None:
        info = steps[cluster_step].cluster_info
        if info is not None:
            for l, c in enumerate(info.clusters, start=1):
                x0, x1 = sorted((c.x_min, c.x_max))
                y0, y1 = sorted((c.y_min, c.y_max))
                empty = not bool(np.any(info.assignment[l - 1]))
                out.append(rect(f"cluster-{l}", None, "cluster empty" if empty else "cluster", x0, y0, x1, y1))
    if steps:
        states = trace.states
        pts = " ".join(f"{_f(px(s[0]))},{_f(py(s[2]))}" for s in states)
        out.append(f'<polyline id="path" class="path" points="{pts}"/>')
        for k, s in enumerate(states):
            out.append(f'<circle id="step-{k}" class="step" cx="{_f(px(s[0]))}" cy="{_f(py(s[2]))}" r="3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

"""MILP encodings of the variable-horizon planning problem.

Two obstacle treatments are available:

* **unclustered** -- every obstacle gets four side binaries per prediction
  step (big-M disjunction "outside at least one side");
* **clustered** -- the optimiser places ``Nc`` axis-aligned cluster
  rectangles, assigns every obstacle to exactly one cluster that contains
  it, and the trajectory only has to avoid the clusters.

Prediction steps run ``j = 1..Ns``; controls ``j = 0..Ns-1``.  The arrival
step ``j*`` is chosen through one-hot binaries ``bT_j`` and contributes
``j*`` to the cost, so the objective is ``j* + gamma * sum(|u|_1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bnb import MilpOutcome
from .dynamics import LtiDiscrete, position_selector
from .lp import LpProblem, solve_lp
from .model import MilpModel

__all__ = [
    "Rect",
    "Scenario",
    "ScenarioError",
    "Mode",
    "ClusterAssignment",
    "Plan",
    "ValidationReport",
    "Layout",
    "build_unclustered",
    "build_clustered",
    "build_model",
    "decode_plan",
    "validate_plan",
    "count_binaries",
    "assignment_from_plan",
    "shifted_plan",
    "check_initial_state",
    "Manoeuvre",
    "obstacle_free_manoeuvres",
    "min_effort_by_arrival",
    "seed_assignment",
]

#: geometric tolerance for containment / penetration checks
GEOM_TOL = 1e-6


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(float(v)) for v in vals):
            raise ScenarioError(f"rectangle has non-finite coordinates: {vals}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ScenarioError(f"rectangle has min > max: {vals}")

    @classmethod
    def from_seq(cls, seq) -> "Rect":
        seq = list(seq)
        if len(seq) != 4:
            raise ScenarioError(f"rectangle needs 4 numbers [x_min, y_min, x_max, y_max], got {seq!r}")
        return cls(*(float(v) for v in seq))

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains_point_strictly(self, p, tol: float = GEOM_TOL) -> bool:
        """True when ``p`` lies inside the open rectangle by more than ``tol``."""
        x, y = float(p[0]), float(p[1])
        return (self.x_min + tol < x < self.x_max - tol) and (self.y_min + tol < y < self.y_max - tol)

    def contains_rect(self, other: "Rect", tol: float = GEOM_TOL) -> bool:
        return (self.x_min <= other.x_min + tol and self.y_min <= other.y_min + tol
                and self.x_max >= other.x_max - tol and self.y_max >= other.y_max - tol)

    def interiors_overlap(self, other: "Rect") -> bool:
        return (self.x_min < other.x_max and other.x_min < self.x_max
                and self.y_min < other.y_max and other.y_min < self.y_max)


def _axis_pair(value, name) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (2,)).copy()
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ScenarioError(f"{name} must be finite and non-negative, got {value!r}")
    return arr


@dataclass
class Scenario:
    """One planning instance.

    ``terminal_lo``/``terminal_hi`` bound the terminal box in state space
    (order ``[r_x, v_x, r_y, v_y]``).  ``v_max``/``a_max`` are symmetric
    per-axis limits.  Big-M fields left at ``None`` are computed per row
    as the smallest constant that deactivates the row over the workspace.
    """

    dynamics: LtiDiscrete
    workspace: Rect
    obstacles: Sequence[Rect]
    terminal_lo: np.ndarray
    terminal_hi: np.ndarray
    v_max: np.ndarray
    a_max: np.ndarray
    gamma: float = 1.0
    Ns: int = 18
    bigM_O: Optional[float] = None
    bigM_C: Optional[float] = None
    bigM_R: Optional[float] = None
    bigM_T: Optional[float] = None
    x0: Optional[np.ndarray] = None
    Nc: Optional[int] = None
    name: str = "scenario"
    C: np.ndarray = field(default_factory=position_selector)

    def __post_init__(self):
        self.obstacles = tuple(self.obstacles)
        self.terminal_lo = np.asarray(self.terminal_lo, dtype=float).reshape(4)
        self.terminal_hi = np.asarray(self.terminal_hi, dtype=float).reshape(4)
        self.v_max = _axis_pair(self.v_max, "v_max")
        self.a_max = _axis_pair(self.a_max, "a_max")
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float).reshape(4)
        self.validate()

    def validate(self):
        if self.dynamics.A.shape != (4, 4) or self.dynamics.B.shape != (4, 2):
            raise ScenarioError("dynamics must be the planar double integrator (4 states, 2 inputs)")
        if int(self.Ns) != self.Ns or self.Ns < 1:
            raise ScenarioError(f"Ns must be a positive integer, got {self.Ns!r}")
        self.Ns = int(self.Ns)
        if not math.isfinite(self.gamma) or self.gamma < 0:
            raise ScenarioError(f"gamma must be >= 0, got {self.gamma!r}")
        if self.Nc is not None and (int(self.Nc) != self.Nc or self.Nc < 1):
            raise ScenarioError(f"Nc must be a positive integer, got {self.Nc!r}")
        for label in ("bigM_O", "bigM_C", "bigM_R", "bigM_T"):
            value = getattr(self, label)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ScenarioError(f"{label} must be a positive number, got {value!r}")
        if np.any(self.terminal_lo > self.terminal_hi) or not np.all(np.isfinite(self.terminal_lo)) \
                or not np.all(np.isfinite(self.terminal_hi)):
            raise ScenarioError("terminal box must be finite with lo <= hi")
        for k, obs in enumerate(self.obstacles):
            if not self.workspace.contains_rect(obs, tol=0.0):
                raise ScenarioError(f"obstacle {k + 1} {obs.as_list()} is not inside the workspace")
        target = self.terminal_rect()
        if not self.workspace.contains_rect(target, tol=0.0):
            raise ScenarioError("terminal box position range is not inside the workspace")
        for k, obs in enumerate(self.obstacles):
            if target.interiors_overlap(obs):
                raise ScenarioError(f"terminal box overlaps obstacle {k + 1} {obs.as_list()}")
        if self.x0 is not None:
            check_initial_state(self, self.x0)

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    def terminal_rect(self) -> Rect:
        lo, hi = self.terminal_lo, self.terminal_hi
        return Rect(lo[0], lo[2], hi[0], hi[2])

    def state_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        ws = self.workspace
        lo = np.array([ws.x_min, -self.v_max[0], ws.y_min, -self.v_max[1]])
        hi = np.array([ws.x_max, self.v_max[0], ws.y_max, self.v_max[1]])
        return lo, hi

    def in_terminal(self, x, tol: float = GEOM_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.terminal_lo - tol) and np.all(x <= self.terminal_hi + tol))

    def replace(self, **changes) -> "Scenario":
        import dataclasses
        return dataclasses.replace(self, **changes)


def check_initial_state(scn: Scenario, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (4,) or not np.all(np.isfinite(x0)):
        raise ScenarioError(f"initial state must be 4 finite numbers, got {x0!r}")
    ws = scn.workspace
    if not (ws.x_min <= x0[0] <= ws.x_max and ws.y_min <= x0[2] <= ws.y_max):
        raise ScenarioError(f"initial position {x0[[0, 2]].tolist()} is outside the workspace")
    for k, obs in enumerate(scn.obstacles):
        if obs.contains_point_strictly((x0[0], x0[2]), tol=0.0):
            raise ScenarioError(f"initial position is inside obstacle {k + 1}")
    return x0


@dataclass(frozen=True)
class Mode:
    """``clusters=None`` selects the unclustered encoding."""

    clusters: Optional[int] = None

    def __post_init__(self):
        if self.clusters is not None and self.clusters < 1:
            raise ValueError("number of clusters must be >= 1")

    @classmethod
    def unclustered(cls) -> "Mode":
        return cls(None)

    @classmethod
    def clustered(cls, n: int) -> "Mode":
        return cls(int(n))

    @property
    def is_clustered(self) -> bool:
        return self.clusters is not None

    @property
    def label(self) -> str:
        return "unclustered" if self.clusters is None else f"clusters={self.clusters}"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        text = text.strip().lower()
        if text in ("unclustered", "none", "0"):
            return cls.unclustered()
        if text.startswith("clusters="):
            text = text.split("=", 1)[1]
        return cls.clustered(int(text))


def count_binaries(mode, Ns: int, No: int, Nc: int = 0) -> int:
    """Collision-avoidance binaries: ``4 Ns No`` unclustered, ``(4 Ns + No) Nc`` clustered."""
    if min(Ns, No, Nc) < 0:
        raise ValueError("counts must be non-negative")
    if isinstance(mode, Mode):
        if mode.is_clustered:
            Nc = mode.clusters
        mode = "clustered" if mode.is_clustered else "unclustered"
    if mode == "unclustered":
        return 4 * Ns * No
    if mode == "clustered":
        return (4 * Ns + No) * Nc
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class Layout:
    """Column indices of every variable group in a built model."""

    mode: Mode
    Ns: int
    x0: np.ndarray
    states: np.ndarray            # (Ns, 4): x_j for j = 1..Ns
    controls: np.ndarray          # (Ns, 2): u_j for j = 0..Ns-1
    abs_controls: np.ndarray      # (Ns, 2)
    arrival: np.ndarray           # (Ns,): bT_j for j = 1..Ns
    avoid: np.ndarray             # (Ns, No or Nc, 4)
    clusters: Optional[np.ndarray] = None   # (Nc, 4): x_min, y_min, x_max, y_max
    assign: Optional[np.ndarray] = None     # (Nc, No)
    #: obstacle-free manoeuvres computed while building (``None`` when not tightened)
    manoeuvres: Optional[list] = field(default=None, repr=False)


@dataclass
class ClusterAssignment:
    clusters: list
    assignment: np.ndarray        # (Nc, No) booleans

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def members(self, cluster: int) -> list[int]:
        """0-based obstacle indices assigned to ``cluster`` (0-based)."""
        return [int(i) for i in np.flatnonzero(self.assignment[cluster])]

    def same_assignment(self, other: "ClusterAssignment | None") -> bool:
        return other is not None and self.assignment.shape == other.assignment.shape \
            and bool(np.array_equal(self.assignment, other.assignment))


@dataclass
class Plan:
    states: np.ndarray            # (Ns+1, 4), row 0 is the measured state
    controls: np.ndarray          # (Ns, 2)
    arrival_step: int
    cost: float
    mode: Mode
    objective_value: Optional[float] = None
    cluster_info: Optional[ClusterAssignment] = None
    avoidance_binaries: Optional[np.ndarray] = None   # (Ns, No or Nc, 4)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, [0, 2]]


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set:
        return {v.split(":", 1)[0] for v in self.violations}

    def __bool__(self) -> bool:
        return self.ok


# ---------------------------------------------------------------------------------------------
# model construction

@dataclass
class Manoeuvre:
    """Cheapest obstacle-free way of reaching the terminal box at exactly ``arrival_step``."""

    arrival_step: int
    effort: float                 # sum of |u|_1
    states: np.ndarray            # (arrival_step, 4): x_1 .. x_arrival
    controls: np.ndarray          # (arrival_step, 2)


def obstacle_free_manoeuvres(scn: Scenario, x0) -> list:
    """One :class:`Manoeuvre` (or ``None`` when unreachable) per arrival step ``1..Ns``.

    Each entry solves a small LP with the dynamics, state and input bounds
    and the terminal box imposed at the arrival step; obstacles are ignored.
    """
    x0 = np.asarray(x0, dtype=float)
    A, B = scn.dynamics.A, scn.dynamics.B
    slo, shi = scn.state_bounds()
    out = []
    for j in range(1, scn.Ns + 1):
        # variables: x_1..x_j (4 each), u_0..u_{j-1} (2 each), s (2 each)
        nx, nu = 4 * j, 2 * j
        n = nx + 2 * nu
        c = np.zeros(n)
        c[nx + nu:] = 1.0
        lo = np.concatenate([np.tile(slo, j), -np.tile(scn.a_max, j), np.zeros(nu)])
        hi = np.concatenate([np.tile(shi, j), np.tile(scn.a_max, j), np.tile(scn.a_max, j)])
        lo[nx - 4:nx] = np.maximum(lo[nx - 4:nx], scn.terminal_lo)
        hi[nx - 4:nx] = np.minimum(hi[nx - 4:nx], scn.terminal_hi)
        if np.any(lo > hi):
            out.append(None)
            continue
        rows, rels, rhs = [], [], []
        for k in range(j):
            for d in range(4):
                row = np.zeros(n)
                row[4 * k + d] = 1.0
                row[nx + 2 * k: nx + 2 * k + 2] = -B[d]
                if k == 0:
                    rhs.append(float(A[d] @ x0))
                else:
                    row[4 * (k - 1): 4 * k] -= A[d]
                    rhs.append(0.0)
                rows.append(row)
                rels.append("==")
            for e in range(2):
                for sign in (1.0, -1.0):
                    row = np.zeros(n)
                    row[nx + nu + 2 * k + e] = 1.0
                    row[nx + 2 * k + e] = -sign
                    rows.append(row)
                    rels.append(">=")
                    rhs.append(0.0)
        res = solve_lp(LpProblem(c, lo, hi, np.array(rows), rels, np.array(rhs)))
        if not res.optimal:
            out.append(None)
            continue
        out.append(Manoeuvre(j, res.objective_value, res.x[:nx].reshape(j, 4), res.x[nx:nx + nu].reshape(j, 2)))
    return out


def min_effort_by_arrival(scn: Scenario, x0, manoeuvres=None) -> np.ndarray:
    """Smallest ``sum |u|_1`` that reaches the terminal box at exactly step ``j``, obstacles ignored.

    Entry ``j - 1`` is ``inf`` when the box cannot be reached at step ``j``.
    """
    if manoeuvres is None:
        manoeuvres = obstacle_free_manoeuvres(scn, x0)
    return np.array([np.inf if mv is None else mv.effort for mv in manoeuvres])


def _arrival_cuts(m: MilpModel, h, scn: Scenario, effort, arrival, abs_u):
    """Valid inequalities from obstacle-free reachability.

    Arrival steps at which the terminal box is unreachable are forbidden,
    and total effort is bounded below by the cheapest obstacle-free
    manoeuvre for the chosen arrival step.
    """
    blocked = [j for j in range(scn.Ns) if not np.isfinite(effort[j])]
    if blocked:
        m.add_constraint([(h[arrival[j]], 1.0) for j in blocked], "<=", 0.0, name="unreachable_arrival")
    terms = [(h[abs_u[j, d]], 1.0) for j in range(scn.Ns) for d in range(2)]
    terms += [(h[arrival[j]], -effort[j]) for j in range(scn.Ns) if np.isfinite(effort[j]) and effort[j] > 0]
    m.add_constraint(terms, ">=", 0.0, name="effort_by_arrival")


def _common(scn: Scenario, x0, mode: Mode, name: str, tighten: bool = True):
    x0 = check_initial_state(scn, x0)
    Ns = scn.Ns
    dyn = scn.dynamics
    m = MilpModel(name)
    slo, shi = scn.state_bounds()
    labels = ("rx", "vx", "ry", "vy")
    states = np.zeros((Ns, 4), dtype=int)
    controls = np.zeros((Ns, 2), dtype=int)
    abs_u = np.zeros((Ns, 2), dtype=int)
    for j in range(1, Ns + 1):
        for d in range(4):
            states[j - 1, d] = m.add_continuous(f"{labels[d]}_{j}", slo[d], shi[d]).index
    for j in range(Ns):
        for d, lab in enumerate(("ax", "ay")):
            controls[j, d] = m.add_continuous(f"{lab}_{j}", -scn.a_max[d], scn.a_max[d]).index
            abs_u[j, d] = m.add_continuous(f"s{lab}_{j}", 0.0, scn.a_max[d]).index
    arrival = np.array([m.add_binary(f"bT_{j}").index for j in range(1, Ns + 1)], dtype=int)
    h = _Handles(m)

    # dynamics: x_{j+1} = A x_j + B u_j, with x_0 the measured state
    A, B = dyn.A, dyn.B
    for j in range(Ns):
        for d in range(4):
            terms = [(h[states[j, d]], 1.0)]
            terms += [(h[controls[j, e]], -B[d, e]) for e in range(2) if B[d, e] != 0.0]
            if j == 0:
                rhs = float(A[d] @ x0)
            else:
                terms += [(h[states[j - 1, e]], -A[d, e]) for e in range(4) if A[d, e] != 0.0]
                rhs = 0.0
            m.add_constraint(terms, "==", rhs, name=f"dyn_{j + 1}_{d}")

    # 1-norm epigraph
    for j in range(Ns):
        for d in range(2):
            m.add_constraint([(h[abs_u[j, d]], 1.0), (h[controls[j, d]], -1.0)], ">=", 0.0,
                             name=f"abs_pos_{j}_{d}")
            m.add_constraint([(h[abs_u[j, d]], 1.0), (h[controls[j, d]], 1.0)], ">=", 0.0,
                             name=f"abs_neg_{j}_{d}")

    # exactly one arrival step; terminal box enforced where bT_j = 1
    m.add_constraint([(h[a], 1.0) for a in arrival], "==", 1.0, name="arrive_once")
    qlo, qhi = scn.terminal_lo, scn.terminal_hi
    for j in range(Ns):
        for d in range(4):
            Mhi = scn.bigM_T if scn.bigM_T is not None else max(0.0, shi[d] - qhi[d])
            Mlo = scn.bigM_T if scn.bigM_T is not None else max(0.0, qlo[d] - slo[d])
            if Mhi > 0:
                # x <= qhi + M (1 - bT)
                m.add_constraint([(h[states[j, d]], 1.0), (h[arrival[j]], Mhi)], "<=", qhi[d] + Mhi,
                                 name=f"term_hi_{j + 1}_{d}")
            if Mlo > 0:
                m.add_constraint([(h[states[j, d]], 1.0), (h[arrival[j]], -Mlo)], ">=", qlo[d] - Mlo,
                                 name=f"term_lo_{j + 1}_{d}")

    # no thrust from the arrival step on: |u_j| <= a_max (1 - sum_{m <= j} bT_m)
    for j in range(1, Ns):
        for d in range(2):
            terms = [(h[abs_u[j, d]], 1.0)] + [(h[arrival[k]], scn.a_max[d]) for k in range(j)]
            m.add_constraint(terms, "<=", scn.a_max[d], name=f"coast_{j}_{d}")

    manoeuvres = obstacle_free_manoeuvres(scn, x0) if tighten else None
    if tighten:
        _arrival_cuts(m, h, scn, min_effort_by_arrival(scn, x0, manoeuvres), arrival, abs_u)

    m.set_objective([(h[arrival[j]], float(j + 1)) for j in range(Ns)]
                    + [(h[abs_u[j, d]], scn.gamma) for j in range(Ns) for d in range(2)])
    layout = Layout(mode, Ns, x0, states, controls, abs_u, arrival, np.zeros((Ns, 0, 4), dtype=int))
    layout.manoeuvres = manoeuvres
    return m, h, layout


class _Handles:
    """Index -> VarHandle adapter for the builder loops."""

    def __init__(self, model: MilpModel):
        self.model = model

    def __getitem__(self, index):
        return self.model.handle_at(int(index))


def _obstacle_bigm(scn: Scenario, obs: Rect) -> tuple[float, float, float, float]:
    if scn.bigM_O is not None:
        return (scn.bigM_O,) * 4
    ws = scn.workspace
    return (max(0.0, ws.x_max - obs.x_min), max(0.0, ws.y_max - obs.y_min),
            max(0.0, obs.x_max - ws.x_min), max(0.0, obs.y_max - ws.y_min))


def build_unclustered(scn: Scenario, x0, tighten: bool = True) -> MilpModel:
    """Model with per-obstacle side binaries ``bO_j_i_f``."""
    m, h, layout = _common(scn, x0, Mode.unclustered(), "unclustered", tighten)
    Ns, No = scn.Ns, scn.n_obstacles
    avoid = np.zeros((Ns, No, 4), dtype=int)
    for j in range(Ns):
        for i in range(No):
            for f in range(4):
                avoid[j, i, f] = m.add_binary(f"bO_{j + 1}_{i + 1}_{f + 1}").index
    for j in range(Ns):
        rx, ry = h[layout.states[j, 0]], h[layout.states[j, 2]]
        for i, obs in enumerate(scn.obstacles):
            M = _obstacle_bigm(scn, obs)
            b = [h[avoid[j, i, f]] for f in range(4)]
            tag = f"{j + 1}_{i + 1}"
            m.add_constraint([(rx, 1.0), (b[0], -M[0])], "<=", obs.x_min, name=f"obs_left_{tag}")
            m.add_constraint([(ry, 1.0), (b[1], -M[1])], "<=", obs.y_min, name=f"obs_below_{tag}")
            m.add_constraint([(rx, -1.0), (b[2], -M[2])], "<=", -obs.x_max, name=f"obs_right_{tag}")
            m.add_constraint([(ry, -1.0), (b[3], -M[3])], "<=", -obs.y_max, name=f"obs_above_{tag}")
            m.add_constraint([(bb, 1.0) for bb in b], "<=", 3.0, name=f"obs_sides_{tag}")
    layout.avoid = avoid
    m.layout = layout
    return m


def build_clustered(scn: Scenario, x0, Nc: int, symmetry_breaking: bool = False,
                    tighten: bool = True) -> MilpModel:
    """Model where obstacles are assigned to optimiser-placed clusters.

    Adds cluster coordinates ``cxmin_l .. cymax_l``, assignment binaries
    ``bR_l_i`` and cluster side binaries ``bC_j_l_f``.  With
    ``symmetry_breaking`` the clusters are ordered by their left edge.
    """
    if int(Nc) != Nc or Nc < 1:
        raise ScenarioError(f"number of clusters must be >= 1, got {Nc!r}")
    Nc = int(Nc)
    m, h, layout = _common(scn, x0, Mode.clustered(Nc), f"clustered_{Nc}", tighten)
    Ns, No = scn.Ns, scn.n_obstacles
    ws = scn.workspace
    clusters = np.zeros((Nc, 4), dtype=int)
    for l in range(Nc):
        clusters[l] = [m.add_continuous(f"cxmin_{l + 1}", ws.x_min, ws.x_max).index,
                       m.add_continuous(f"cymin_{l + 1}", ws.y_min, ws.y_max).index,
                       m.add_continuous(f"cxmax_{l + 1}", ws.x_min, ws.x_max).index,
                       m.add_continuous(f"cymax_{l + 1}", ws.y_min, ws.y_max).index]
    assign = np.zeros((Nc, No), dtype=int)
    for l in range(Nc):
        for i in range(No):
            assign[l, i] = m.add_binary(f"bR_{l + 1}_{i + 1}").index
    avoid = np.zeros((Ns, Nc, 4), dtype=int)
    for j in range(Ns):
        for l in range(Nc):
            for f in range(4):
                avoid[j, l, f] = m.add_binary(f"bC_{j + 1}_{l + 1}_{f + 1}").index

    # containment: obstacle i inside cluster l whenever bR_{l,i} = 1
    for l in range(Nc):
        c = [h[k] for k in clusters[l]]
        for i, obs in enumerate(scn.obstacles):
            if scn.bigM_R is not None:
                M = (scn.bigM_R,) * 4
            else:
                M = (max(0.0, ws.x_max - obs.x_min), max(0.0, ws.y_max - obs.y_min),
                     max(0.0, obs.x_max - ws.x_min), max(0.0, obs.y_max - ws.y_min))
            b = h[assign[l, i]]
            tag = f"{l + 1}_{i + 1}"
            m.add_constraint([(c[0], 1.0), (b, M[0])], "<=", obs.x_min + M[0], name=f"contain_left_{tag}")
            m.add_constraint([(c[1], 1.0), (b, M[1])], "<=", obs.y_min + M[1], name=f"contain_below_{tag}")
            m.add_constraint([(c[2], -1.0), (b, M[2])], "<=", -obs.x_max + M[2], name=f"contain_right_{tag}")
            m.add_constraint([(c[3], -1.0), (b, M[3])], "<=", -obs.y_max + M[3], name=f"contain_above_{tag}")
    for i in range(No):
        m.add_constraint([(h[assign[l, i]], 1.0) for l in range(Nc)], "==", 1.0, name=f"assign_once_{i + 1}")

    if scn.bigM_C is not None:
        Mx = My = scn.bigM_C
    else:
        Mx, My = ws.width, ws.height
    for j in range(Ns):
        rx, ry = h[layout.states[j, 0]], h[layout.states[j, 2]]
        for l in range(Nc):
            c = [h[k] for k in clusters[l]]
            b = [h[avoid[j, l, f]] for f in range(4)]
            tag = f"{j + 1}_{l + 1}"
            m.add_constraint([(rx, 1.0), (c[0], -1.0), (b[0], -Mx)], "<=", 0.0, name=f"clu_left_{tag}")
            m.add_constraint([(ry, 1.0), (c[1], -1.0), (b[1], -My)], "<=", 0.0, name=f"clu_below_{tag}")
            m.add_constraint([(rx, -1.0), (c[2], 1.0), (b[2], -Mx)], "<=", 0.0, name=f"clu_right_{tag}")
            m.add_constraint([(ry, -1.0), (c[3], 1.0), (b[3], -My)], "<=", 0.0, name=f"clu_above_{tag}")
            m.add_constraint([(bb, 1.0) for bb in b], "<=", 3.0, name=f"clu_sides_{tag}")

    if symmetry_breaking:
        for l in range(Nc - 1):
            m.add_constraint([(h[clusters[l, 0]], 1.0), (h[clusters[l + 1, 0]], -1.0)], "<=", 0.0,
                             name=f"order_{l + 1}")

    layout.avoid = avoid
    layout.clusters = clusters
    layout.assign = assign
    m.layout = layout
    return m


def build_model(scn: Scenario, x0, mode: Mode, symmetry_breaking: bool = False,
                tighten: bool = True) -> MilpModel:
    if mode.is_clustered:
        return build_clustered(scn, x0, mode.clusters, symmetry_breaking, tighten)
    return build_unclustered(scn, x0, tighten)


# ---------------------------------------------------------------------------------------------
# decoding and validation

def decode_plan(model: MilpModel, outcome: MilpOutcome, scn: Scenario, mode: Mode | None = None) -> Plan:
    """Turn a solver assignment into a :class:`Plan`."""
    if outcome is None or outcome.x is None:
        raise ValueError("outcome carries no incumbent to decode")
    layout: Layout = model.layout
    mode = mode or layout.mode
    x = np.asarray(outcome.x, dtype=float)
    states = np.vstack([layout.x0, x[layout.states]])
    controls = x[layout.controls]
    arrival_step = int(np.argmax(x[layout.arrival])) + 1
    cost = arrival_step + scn.gamma * float(np.abs(controls).sum())
    avoid = np.round(x[layout.avoid]).astype(int) if layout.avoid.size else np.zeros(layout.avoid.shape, int)
    info = None
    if mode.is_clustered:
        coords = x[layout.clusters]
        rects = [_loose_rect(row) for row in coords]
        info = ClusterAssignment(rects, x[layout.assign] > 0.5)
    return Plan(states, controls, arrival_step, cost, mode, outcome.objective_value, info, avoid)


@dataclass(frozen=True)
class _LooseRect:
    """Cluster coordinates as decided by the optimiser; may be inverted when empty."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def as_list(self):
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def contains_point_strictly(self, p, tol: float = GEOM_TOL) -> bool:
        return Rect.contains_point_strictly(self, p, tol)

    def contains_rect(self, other, tol: float = GEOM_TOL) -> bool:
        return Rect.contains_rect(self, other, tol)

    @property
    def is_inverted(self) -> bool:
        return self.x_min > self.x_max or self.y_min > self.y_max


def _loose_rect(row) -> _LooseRect:
    return _LooseRect(*(float(v) for v in row))


def validate_plan(plan: Plan, scn: Scenario, tol: float = GEOM_TOL) -> ValidationReport:
    """Independent check of a plan against the scenario; violations are returned, not raised."""
    report = ValidationReport()
    v = report.violations
    A, B = scn.dynamics.A, scn.dynamics.B
    X, U = np.asarray(plan.states, float), np.asarray(plan.controls, float)
    n_steps = U.shape[0]
    if X.shape[0] != n_steps + 1:
        v.append(f"shape: {X.shape[0]} states for {n_steps} controls")
        return report
    for j in range(n_steps):
        err = np.abs(X[j + 1] - A @ X[j] - B @ U[j]).max()
        if err > tol:
            v.append(f"dynamics: step {j + 1} deviates by {err:.3g}")
    slo, shi = scn.state_bounds()
    for j in range(1, n_steps + 1):
        if np.any(X[j] < slo - tol) or np.any(X[j] > shi + tol):
            v.append(f"state_bounds: step {j} state {X[j].tolist()} outside bounds")
    for j in range(n_steps):
        if np.any(np.abs(U[j]) > scn.a_max + tol):
            v.append(f"control_bounds: step {j} control {U[j].tolist()} exceeds a_max")
    js = plan.arrival_step
    if not 1 <= js <= n_steps:
        v.append(f"arrival: arrival step {js} outside 1..{n_steps}")
    else:
        if not scn.in_terminal(X[js], tol):
            v.append(f"terminal: state at arrival step {js} is {X[js].tolist()}, not in the terminal box")
        for j in range(1, js + 1):
            p = (X[j, 0], X[j, 2])
            for i, obs in enumerate(scn.obstacles):
                if obs.contains_point_strictly(p, tol):
                    v.append(f"obstacle: step {j} position {list(p)} inside obstacle {i + 1}")
    expected = js + scn.gamma * float(np.abs(U).sum())
    if abs(plan.cost - expected) > tol:
        v.append(f"cost: plan cost {plan.cost} differs from {expected}")
    if plan.mode.is_clustered:
        info = plan.cluster_info
        if info is None:
            v.append("clusters: clustered plan without cluster information")
            return report
        asg = np.asarray(info.assignment, dtype=bool)
        if asg.shape != (len(info.clusters), scn.n_obstacles):
            v.append(f"assignment: matrix shape {asg.shape} does not match clusters x obstacles")
            return report
        sums = asg.sum(axis=0)
        for i in np.flatnonzero(sums != 1):
            v.append(f"assignment: obstacle {i + 1} assigned to {int(sums[i])} clusters")
        for l, i in zip(*np.nonzero(asg)):
            if not info.clusters[l].contains_rect(scn.obstacles[i], tol):
                v.append(f"containment: obstacle {i + 1} not inside cluster {l + 1}")
        for j in range(1, n_steps + 1):
            p = (X[j, 0], X[j, 2])
            for l, c in enumerate(info.clusters):
                if c.contains_point_strictly(p, tol):
                    v.append(f"cluster: step {j} position {list(p)} inside cluster {l + 1}")
    return report


# ---------------------------------------------------------------------------------------------
# warm starts

def _side_binaries(p, rect) -> np.ndarray:
    """Side binaries for point ``p`` against ``rect``: 0 marks the first side it is outside of."""
    sides = (p[0] <= rect.x_min, p[1] <= rect.y_min, p[0] >= rect.x_max, p[1] >= rect.y_max)
    b = np.ones(4)
    for f, ok in enumerate(sides):
        if ok:
            b[f] = 0.0
            break
    return b


def assignment_from_plan(model: MilpModel, scn: Scenario, states, controls, arrival_step: int,
                         clusters=None, assignment=None) -> np.ndarray:
    """Full variable vector for ``model`` reproducing the given trajectory.

    ``states`` holds ``x_1..x_Ns`` (the measured state excluded).  Side
    binaries are derived from the positions; the caller should still check
    feasibility.
    """
    layout: Layout = model.layout
    x = np.zeros(model.num_vars)
    states = np.asarray(states, float)
    controls = np.asarray(controls, float)
    x[layout.states] = states
    x[layout.controls] = controls
    x[layout.abs_controls] = np.abs(controls)
    x[layout.arrival[arrival_step - 1]] = 1.0
    if layout.mode.is_clustered:
        coords = np.asarray([c.as_list() for c in clusters], float)
        x[layout.clusters] = coords
        x[layout.assign] = np.asarray(assignment, float)
        rects = [_loose_rect(r) for r in coords]
    else:
        rects = list(scn.obstacles)
    for j in range(layout.Ns):
        p = (states[j, 0], states[j, 2])
        for k, rect in enumerate(rects):
            x[layout.avoid[j, k]] = _side_binaries(p, rect)
    return x


def shifted_plan(plan: Plan, scn: Scenario):
    """Tail of ``plan`` one step later, padded with a coasting step.

    Returns ``(states x_1..x_Ns, controls, arrival_step)`` for the problem
    posed from ``plan.states[1]``, or ``None`` when the plan arrives at
    its first step.
    """
    if plan.arrival_step <= 1:
        return None
    X, U = plan.states, plan.controls
    last = scn.dynamics.A @ X[-1]
    states = np.vstack([X[2:], last])
    controls = np.vstack([U[1:], np.zeros((1, 2))])
    return states, controls, plan.arrival_step - 1


def _coasted(scn: Scenario, mv: Manoeuvre) -> tuple[np.ndarray, np.ndarray]:
    """Extend a manoeuvre to the full horizon with zero controls."""
    A = scn.dynamics.A
    states = list(mv.states)
    controls = list(mv.controls)
    while len(states) < scn.Ns:
        states.append(A @ states[-1])
        controls.append(np.zeros(2))
    return np.array(states), np.array(controls)


def _group_obstacles(scn: Scenario, positions: np.ndarray, Nc: int, budget: int):
    """Partition obstacles into at most ``Nc`` groups whose bounding boxes avoid ``positions``.

    Depth-first over obstacles in index order; each obstacle joins an open
    group or opens a new one.  Returns a list of member lists, or ``None``
    when no partition is found within ``budget`` visited nodes.
    """
    obs = np.array([o.as_list() for o in scn.obstacles], float).reshape(-1, 4)
    No = obs.shape[0]
    px, py = positions[:, 0], positions[:, 1]

    def clear(box) -> bool:
        inside = ((px > box[0] + GEOM_TOL) & (px < box[2] - GEOM_TOL)
                  & (py > box[1] + GEOM_TOL) & (py < box[3] - GEOM_TOL))
        return not inside.any()

    groups: list[list[int]] = []
    boxes: list[np.ndarray] = []
    visited = 0

    def place(i: int) -> bool:
        nonlocal visited
        visited += 1
        if visited > budget:
            return False
        if i == No:
            return True
        for g in range(len(groups)):
            box = np.concatenate([np.minimum(boxes[g][:2], obs[i, :2]), np.maximum(boxes[g][2:], obs[i, 2:])])
            if clear(box):
                old = boxes[g]
                groups[g].append(i)
                boxes[g] = box
                if place(i + 1):
                    return True
                groups[g].pop()
                boxes[g] = old
        if len(groups) < Nc and clear(obs[i]):
            groups.append([i])
            boxes.append(obs[i].copy())
            if place(i + 1):
                return True
            groups.pop()
            boxes.pop()
        return False

    return [list(g) for g in groups] if place(0) else None


def seed_assignment(model: MilpModel, scn: Scenario, budget: int = 200_000) -> Optional[np.ndarray]:
    """Feasible starting point built from the obstacle-free manoeuvres.

    Arrival steps are tried in order of their obstacle-free cost.  The
    manoeuvre is coasted to the end of the horizon and accepted when it
    clears every obstacle (or, when clustered, when the obstacles can be
    grouped into boxes that it clears).  Returns ``None`` when nothing
    works; the result is always checked with :meth:`MilpModel.is_feasible`.
    """
    layout: Layout = model.layout
    manoeuvres = layout.manoeuvres
    if manoeuvres is None:
        manoeuvres = obstacle_free_manoeuvres(scn, layout.x0)
    ranked = sorted((mv.arrival_step + scn.gamma * mv.effort, mv.arrival_step, mv)
                    for mv in manoeuvres if mv is not None)
    ws = scn.workspace
    empty = _LooseRect(ws.x_max, ws.y_max, ws.x_min, ws.y_min)
    for _, _, mv in ranked:
        states, controls = _coasted(scn, mv)
        positions = states[:, [0, 2]]
        if layout.mode.is_clustered:
            Nc = layout.mode.clusters
            groups = _group_obstacles(scn, positions, Nc, budget)
            if groups is None:
                continue
            obs = np.array([o.as_list() for o in scn.obstacles], float).reshape(-1, 4)
            rects = [_LooseRect(*obs[g, :2].min(axis=0), *obs[g, 2:].max(axis=0)) for g in groups]
            order = sorted(range(len(rects)), key=lambda l: rects[l].x_min)
            rects = [rects[l] for l in order] + [empty] * (Nc - len(rects))
            assign = np.zeros((Nc, scn.n_obstacles))
            for slot, l in enumerate(order):
                assign[slot, groups[l]] = 1.0
            x = assignment_from_plan(model, scn, states, controls, mv.arrival_step, rects, assign)
        else:
            x = assignment_from_plan(model, scn, states, controls, mv.arrival_step)
        if model.is_feasible(x):
            return x
    return None

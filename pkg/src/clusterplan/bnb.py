"""Best-bound branch-and-bound over the bounded simplex.

Children inherit their parent's optimal basis, so each node usually needs
only a handful of phase-1 pivots to repair the one bound that changed.
"""
from __future__ import annotations

import enum
import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, TextIO, Union

import numpy as np

from .lp import BoundedSimplex, LpProblem, LpStatus, LpTolerances
from .model import MilpModel, ModelError

__all__ = ["MilpStatus", "SolverOptions", "MilpOutcome", "solve_milp"]


class MilpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT_REACHED = "limit_reached"


@dataclass
class SolverOptions:
    integrality_tol: float = 1e-6
    rel_gap: float = 1e-6
    abs_gap: float = 1e-9
    node_limit: int = 1_000_000
    time_limit: Optional[float] = None
    branching: str = "most_fractional"
    node_selection: str = "best_bound"
    #: order among nodes with equal bound: ``"fifo"`` (oldest first) or ``"deepest"``
    #: (deepest first, then oldest)
    tie_break: str = "fifo"
    #: round each fractional node solution, fix the binaries and re-solve the LP
    rounding_heuristic: bool = True
    #: run a guided dive at the root and then at every ``dive_every``-th node (0 disables diving)
    dive_every: int = 20
    #: snap zero-cost fractional binaries to integers when every row they touch stays satisfied
    purify: bool = True
    lp_tolerances: LpTolerances = field(default_factory=LpTolerances)
    #: callable receiving one line per event, or a writable text stream
    log: Union[Callable[[str], None], TextIO, None] = None

    def __post_init__(self):
        for name in ("integrality_tol", "rel_gap", "abs_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dive_every < 0:
            raise ValueError("dive_every must be non-negative")
        if self.node_limit <= 0:
            raise ValueError("node_limit must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.branching != "most_fractional":
            raise ValueError(f"unsupported branching rule {self.branching!r}")
        if self.tie_break not in ("fifo", "deepest"):
            raise ValueError(f"unsupported tie break {self.tie_break!r}")
        if self.node_selection != "best_bound":
            raise ValueError(f"unsupported node selection {self.node_selection!r}")

    def gap(self, incumbent: float) -> float:
        return max(self.abs_gap, self.rel_gap * abs(incumbent))


@dataclass
class MilpOutcome:
    status: MilpStatus
    x: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    best_bound: float = -math.inf
    nodes_explored: int = 0
    solve_time: float = 0.0
    lp_iterations: int = 0
    #: global lower bound recorded after every processed node
    bound_history: list = field(default_factory=list, repr=False)

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None


class _Log:
    def __init__(self, sink):
        if sink is None:
            self.emit = None
        elif callable(sink):
            self.emit = sink
        else:
            self.emit = lambda line: sink.write(line + "\n")

    def __call__(self, event, **fields):
        if self.emit is None:
            return
        parts = [f"event={event}"]
        for key, value in fields.items():
            if isinstance(value, float):
                parts.append(f"{key}={value:.10g}")
            else:
                parts.append(f"{key}={value}")
        self.emit(" ".join(parts))


def solve_milp(model: MilpModel, opts: SolverOptions | None = None,
               warm_start=None) -> MilpOutcome:
    """Solve ``model`` to optimality (within the gap) or until a limit is hit.

    ``warm_start`` is an optional full assignment; when it is feasible it
    seeds the incumbent.
    """
    opts = opts or SolverOptions()
    if not isinstance(model, MilpModel):
        raise ModelError("solve_milp expects a MilpModel")
    start = time.perf_counter()
    lp = model.relax()
    bins = model.binary_indices()
    search = _Search(lp, bins, opts, model.objective_constant, start)
    if warm_start is not None:
        x0 = np.asarray(warm_start, dtype=float)
        if model.is_feasible(x0, opts.lp_tolerances.feasibility * 10, opts.integrality_tol):
            x0 = x0.copy()
            x0[bins] = np.round(x0[bins])
            search.offer(x0, model.objective_value(x0), "warm_start")
    out = search.run()
    if out.status is MilpStatus.UNBOUNDED:
        # the relaxation has a ray; the MILP is unbounded only if it has an integer point
        probe = LpProblem(np.zeros(lp.num_vars), lp.lower, lp.upper, lp.matrix, lp.relations, lp.rhs)
        feas = _Search(probe, bins, opts, 0.0, start, first_only=True).run()
        if feas.x is None and feas.status is not MilpStatus.LIMIT_REACHED:
            out = MilpOutcome(MilpStatus.INFEASIBLE, nodes_explored=out.nodes_explored + feas.nodes_explored)
        elif feas.x is None:
            out = MilpOutcome(MilpStatus.LIMIT_REACHED, nodes_explored=out.nodes_explored + feas.nodes_explored)
    out.solve_time = time.perf_counter() - start
    return out


class _Search:
    def __init__(self, lp: LpProblem, bins: np.ndarray, opts: SolverOptions, constant: float,
                 start: float, first_only: bool = False):
        self.lp = lp
        self.bins = bins
        self.opts = opts
        self.constant = constant
        self.start = start
        self.first_only = first_only
        self.simplex = BoundedSimplex(lp, opts.lp_tolerances)
        self.inc_x: Optional[np.ndarray] = None
        self.inc_obj = math.inf
        self.log = _Log(opts.log)
        self.lp_iterations = 0
        self.nodes = 0
        csc = lp.matrix.tocsc()
        self._cols = [(csc.indices[csc.indptr[j]:csc.indptr[j + 1]], csc.data[csc.indptr[j]:csc.indptr[j + 1]])
                      for j in bins]
        self._free_cost = lp.objective[bins] == 0.0
        self._row_count = np.array([len(rows) for rows, _ in self._cols], dtype=int)
        self._row_lo, self._row_hi = lp.row_bounds()

    def offer(self, x, obj, source):
        """Accept ``x`` as the incumbent if it is feasible and improves on the current one."""
        if self.lp.max_violation(x) > 10 * self.opts.lp_tolerances.feasibility:
            self.log("reject", node=self.nodes, objective=obj, source=source)
            return False
        if self.inc_x is None or obj < self.inc_obj - 1e-9 * max(1.0, abs(self.inc_obj)):
            self.inc_x, self.inc_obj = x, obj
            self.log("incumbent", node=self.nodes, objective=obj, source=source)
            return True
        return False

    def _lp(self, lo, hi, basis):
        out = self.simplex.solve(lo, hi, basis)
        self.lp_iterations += out.iterations
        return out

    def _limit_hit(self) -> bool:
        if self.nodes >= self.opts.node_limit:
            return True
        tl = self.opts.time_limit
        return tl is not None and time.perf_counter() - self.start > tl

    def run(self) -> MilpOutcome:
        opts, bins = self.opts, self.bins
        lo0, hi0 = self.lp.lower.copy(), self.lp.upper.copy()
        seq = 0
        # heap entries: (bound key, tie key, sequence, binary lower, binary upper, parent basis, depth)
        heap = [(-math.inf, 0, seq, lo0[bins].copy(), hi0[bins].copy(), None, 0)]
        history = []
        pruned_bound = math.inf
        status = None
        while heap:
            key = heap[0][0]
            if self.inc_x is not None and key >= self.inc_obj - opts.gap(self.inc_obj):
                pruned_bound = min(pruned_bound, key)
                break
            if self.first_only and self.inc_x is not None:
                break
            if self._limit_hit():
                status = MilpStatus.LIMIT_REACHED
                break
            key, _, _, blo, bhi, basis, depth = heapq.heappop(heap)
            self.nodes += 1
            lo, hi = lo0.copy(), hi0.copy()
            lo[bins], hi[bins] = blo, bhi
            out = self._lp(lo, hi, basis)
            if out.status is LpStatus.UNBOUNDED:
                if self.nodes == 1:
                    status = MilpStatus.UNBOUNDED
                    break
                raise RuntimeError("unbounded node under a bounded root relaxation")
            if out.status is LpStatus.INFEASIBLE:
                self.log("infeasible", node=self.nodes, depth=depth)
                history.append(self._global_bound(heap))
                continue
            z = out.objective_value + self.constant
            if self.inc_x is not None and z >= self.inc_obj - opts.gap(self.inc_obj):
                pruned_bound = min(pruned_bound, z)
                self.log("prune", node=self.nodes, depth=depth, lp=z, incumbent=self.inc_obj)
                history.append(self._global_bound(heap))
                continue
            if opts.purify:
                self._purify(out.x, lo, hi)
            xb = out.x[bins]
            frac = np.abs(xb - np.round(xb))
            if frac.max(initial=0.0) <= opts.integrality_tol and self._settle(out.x, lo, hi, out.basis, "node"):
                history.append(self._global_bound(heap))
                continue
            if opts.rounding_heuristic:
                self._round_and_resolve(out, lo, hi)
            if opts.dive_every and (self.nodes - 1) % opts.dive_every == 0:
                self._dive(out, lo, hi)
            free = blo < bhi
            if not free.any():
                # every binary is fixed and no completion satisfies the rows
                self.log("infeasible", node=self.nodes, depth=depth)
                history.append(self._global_bound(heap))
                continue
            # most fractional among the free binaries, lowest index on ties
            score = np.where(free, np.minimum(xb, 1.0 - xb), -1.0)
            pick = int(np.argmax(score))
            j = bins[pick]
            self.log("branch", node=self.nodes, depth=depth, lp=z, var=int(j), value=float(out.x[j]),
                     incumbent=self.inc_obj, open=len(heap))
            first, second = (1.0, 0.0) if xb[pick] >= 0.5 else (0.0, 1.0)
            for val in (first, second):
                clo, chi = blo.copy(), bhi.copy()
                clo[pick] = chi[pick] = val
                seq += 1
                tie = -(depth + 1) if opts.tie_break == "deepest" else 0
                heapq.heappush(heap, (z, tie, seq, clo, chi, out.basis, depth + 1))
            history.append(self._global_bound(heap))

        if status is None:
            status = MilpStatus.OPTIMAL if self.inc_x is not None else MilpStatus.INFEASIBLE
        if status is MilpStatus.UNBOUNDED:
            best_bound = -math.inf
        elif status is MilpStatus.LIMIT_REACHED:
            best_bound = min(self._global_bound(heap), pruned_bound)
        else:
            best_bound = min(self.inc_obj, pruned_bound)
        self.log("done", status=status.value, nodes=self.nodes, bound=best_bound, incumbent=self.inc_obj)
        return MilpOutcome(status, self.inc_x, None if self.inc_x is None else float(self.inc_obj),
                           best_bound, self.nodes, 0.0, self.lp_iterations, history)

    def _purify(self, x, lo, hi):
        """Move fractional zero-cost binaries to integers without leaving the node's feasible set.

        Continuous values stay fixed, so the objective is unchanged.  A first
        pass lowers every zero-cost binary (fractional or not) to 0 where all
        rows containing it stay within tolerance; a second pass raises the
        binaries that are still fractional to 1 under the same test.
        """
        bins, tol = self.bins, self.opts.lp_tolerances.feasibility
        xb = x[bins]
        if not np.any(np.abs(xb - np.round(xb)) > self.opts.integrality_tol):
            return
        act = self.lp.matrix @ x
        rlo, rhi = self._row_lo, self._row_hi

        def attempt(k, v):
            j = bins[k]
            if v < lo[j] or v > hi[j] or x[j] == v:
                return x[j] == v
            rows, vals = self._cols[k]
            new = act[rows] + vals * (v - x[j])
            if np.all(new >= rlo[rows] - tol) and np.all(new <= rhi[rows] + tol):
                act[rows] = new
                x[j] = v
                return True
            return False

        for k in np.flatnonzero(self._free_cost & (xb > 0.0)):
            attempt(k, 0.0)
        xb = x[bins]
        frac = np.abs(xb - np.round(xb)) > self.opts.integrality_tol
        for k in np.flatnonzero(frac & self._free_cost):
            attempt(k, 1.0)

    def _global_bound(self, heap) -> float:
        return min(heap[0][0] if heap else math.inf, self.inc_obj)

    def _dive(self, out, lo, hi):
        """Guided diving with bounded backtracking.

        Repeatedly fixes a free fractional binary, preferring binaries that
        appear in many rows and, among those, the least fractional.  Both values are
        tried and the one with the lower LP value is taken (the rounded
        value on ties); the other, if feasible, is remembered.  At a dead
        end the most recent remembered alternative is resumed.  The dive
        ends on an integral point, when its bound cannot beat the
        incumbent, or after ``2 * len(bins)`` LP solves.  Dive LPs are not
        counted as nodes.
        """
        bins, opts = self.bins, self.opts
        budget = 2 * len(bins)
        solves = 0
        lo, hi = lo.copy(), hi.copy()
        x, basis = out.x.copy(), out.basis
        stack = []   # (column, alternative value, its LP outcome, bounds before fixing)
        while True:
            xb = x[bins]
            frac = np.abs(xb - np.round(xb))
            free = (frac > opts.integrality_tol) & (lo[bins] < hi[bins])
            if not free.any() and self._settle(x, lo, hi, None, "dive"):
                self.log("dive", node=self.nodes, fixed=len(stack), lp_solves=solves, result="integral",
                         objective=float(self.lp.objective @ x) + self.constant)
                return
            if not free.any():
                self.log("dive", node=self.nodes, fixed=len(stack), lp_solves=solves, result="infeasible")
                return
            cand = np.flatnonzero(free)
            # most constrained first (appears in the most rows), then least fractional
            order = np.lexsort((frac[cand], -self._row_count[cand]))
            k = int(cand[order[0]])
            j = bins[k]
            near = float(np.round(xb[k]))
            tried = []
            for v in (near, 1.0 - near):
                lo[j] = hi[j] = v
                res = self._lp(lo, hi, basis)
                solves += 1
                if res.status is LpStatus.OPTIMAL:
                    z = res.objective_value + self.constant
                    if self.inc_x is None or z < self.inc_obj - opts.gap(self.inc_obj):
                        tried.append((res.objective_value, len(tried), v, res))
            lo[j], hi[j] = self.lp.lower[j], self.lp.upper[j]
            if len(tried) == 2 and tried[1][0] < tried[0][0] - 1e-9:
                tried.reverse()
            if tried:
                _, _, v, res = tried[0]
                alt = tried[1] if len(tried) > 1 else None
                stack.append((j, alt, lo.copy(), hi.copy()))
                lo[j] = hi[j] = v
            else:
                res = None
                while stack and res is None:
                    j, alt, slo, shi = stack.pop()
                    if alt is not None:
                        lo, hi = slo, shi
                        _, _, v, res = alt
                        stack.append((j, None, lo.copy(), hi.copy()))
                        lo[j] = hi[j] = v
                if res is None:
                    self.log("dive", node=self.nodes, fixed=0, lp_solves=solves, result="infeasible")
                    return
            if solves >= budget:
                self.log("dive", node=self.nodes, fixed=len(stack), lp_solves=solves, result="budget")
                return
            x, basis = res.x.copy(), res.basis
            if opts.purify:
                self._purify(x, lo, hi)

    def _settle(self, x, lo, hi, basis, source) -> bool:
        """Offer ``x`` (binaries within tolerance of integers) as an incumbent.

        The binaries are snapped to 0/1.  When the snapped point violates a
        row by more than the feasibility tolerance, the LP is re-solved with
        the binaries fixed so that the continuous part matches them.  ``x`` is updated in place; returns False when
        the snapped binaries admit no feasible continuous completion.
        """
        bins = self.bins
        rounded = np.round(x[bins])
        snapped = x.copy()
        snapped[bins] = rounded
        if self.lp.max_violation(snapped) <= self.opts.lp_tolerances.feasibility:
            x[:] = snapped
            self.offer(snapped, float(self.lp.objective @ snapped) + self.constant, source)
            return True
        res = self._complete(rounded, lo, hi, basis)
        if res is None:
            return False
        x[:] = res.x
        self.offer(x.copy(), res.objective_value + self.constant, source)
        return True

    def _complete(self, values, lo, hi, basis):
        """Best continuous completion with the binaries fixed to ``values`` (``None`` if infeasible).

        A warm start can leave a fixed binary basic at a value inside the
        feasibility tolerance; the LP is then re-solved from scratch, where
        fixed columns never enter the basis, so the binaries come back exact.
        """
        bins = self.bins
        flo, fhi = lo.copy(), hi.copy()
        flo[bins] = fhi[bins] = values
        res = self._lp(flo, fhi, basis)
        if res.status is LpStatus.OPTIMAL and not np.array_equal(res.x[bins], values):
            res = self._lp(flo, fhi, None)
        return res if res.status is LpStatus.OPTIMAL else None

    def _round_and_resolve(self, out, lo, hi):
        bins = self.bins
        rounded = np.clip(np.round(out.x[bins]), lo[bins], hi[bins])
        res = self._complete(rounded, lo, hi, out.basis)
        if res is not None:
            self.offer(res.x.copy(), res.objective_value + self.constant, "rounding")


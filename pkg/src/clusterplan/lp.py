"""Bounded-variable primal simplex.

The solver works on the row-activity form ``A x - r = 0`` where every row
gets one logical variable ``r`` whose bounds encode the relation and the
right-hand side.  Structural and logical variables are then treated alike:
each one is either basic or sits nonbasic at a finite bound (or at zero
when it is free).

Phase 1 minimises the total bound violation of the basic variables, which
means a solve can start from *any* basis, including the optimal basis of a
closely related problem.  Branch-and-bound relies on this to restart child
nodes from their parent.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger

__all__ = [
    "Relation",
    "LpStatus",
    "LpTolerances",
    "LpProblem",
    "LpOutcome",
    "Basis",
    "LpError",
    "SimplexError",
    "BoundedSimplex",
    "solve_lp",
]


class LpError(ValueError):
    """Raised for malformed problems."""


class SimplexError(RuntimeError):
    """Raised when the simplex loop cannot finish (iteration cap, singular basis)."""


class Relation(str, enum.Enum):
    LE = "<="
    EQ = "=="
    GE = ">="

    @classmethod
    def parse(cls, value) -> "Relation":
        if isinstance(value, Relation):
            return value
        aliases = {"<=": cls.LE, "<": cls.LE, "le": cls.LE,
                   "==": cls.EQ, "=": cls.EQ, "eq": cls.EQ,
                   ">=": cls.GE, ">": cls.GE, "ge": cls.GE}
        try:
            return aliases[str(value).strip().lower()]
        except KeyError:
            raise LpError(f"unknown relation {value!r}") from None


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpTolerances:
    pivot: float = 1e-9
    feasibility: float = 1e-7
    reduced_cost: float = 1e-7
    #: consecutive pivots without objective progress before Bland's rule;
    #: ``None`` means ``5 * number of constraints``
    bland_after: Optional[int] = None
    refactor_every: int = 64
    max_iterations: int = 200_000

    def __post_init__(self):
        for name in ("pivot", "feasibility", "reduced_cost"):
            if not getattr(self, name) > 0:
                raise LpError(f"tolerance {name} must be positive")


# nonbasic/basic markers
BASIC, AT_LOWER, AT_UPPER, FREE_ZERO = 0, 1, 2, 3


@dataclass
class Basis:
    """Basis snapshot: basic variable per row plus the status of every variable.

    Indices run over structural variables first, then one logical per row.
    """

    head: np.ndarray
    status: np.ndarray

    def copy(self) -> "Basis":
        return Basis(self.head.copy(), self.status.copy())


@dataclass
class LpProblem:
    """Minimise ``objective @ x`` subject to row relations and variable bounds.

    ``matrix`` may be a dense array or any scipy sparse matrix with
    ``len(rhs)`` rows and ``len(objective)`` columns.
    """

    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    matrix: sp.csr_matrix
    relations: list
    rhs: np.ndarray

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        self.lower = _bound_array(self.lower, n, -np.inf, "lower")
        self.upper = _bound_array(self.upper, n, np.inf, "upper")
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        m = self.rhs.size
        if self.matrix is None:
            self.matrix = sp.csr_matrix((m, n))
        elif sp.issparse(self.matrix):
            self.matrix = sp.csr_matrix(self.matrix, dtype=float)
        else:
            dense = np.asarray(self.matrix, dtype=float)
            if dense.size == 0:
                dense = dense.reshape(m, n)
            self.matrix = sp.csr_matrix(dense)
        self.relations = [Relation.parse(r) for r in self.relations]
        self._validate()

    def _validate(self):
        n, m = self.num_vars, self.num_constraints
        if self.matrix.shape != (m, n):
            raise LpError(f"constraint matrix has shape {self.matrix.shape}, expected {(m, n)}")
        if len(self.relations) != m:
            raise LpError(f"{len(self.relations)} relations for {m} constraint rows")
        if not np.all(np.isfinite(self.objective)):
            raise LpError("objective contains non-finite coefficients")
        if not np.all(np.isfinite(self.matrix.data)):
            raise LpError("constraint matrix contains non-finite coefficients")
        if not np.all(np.isfinite(self.rhs)):
            raise LpError("right-hand side contains non-finite values")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise LpError("variable bounds contain NaN")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise LpError("a lower bound of +inf or an upper bound of -inf is not allowed")

    @classmethod
    def from_constraints(cls, objective, bounds=None,
                         constraints: Iterable[tuple] = ()) -> "LpProblem":
        """Build from ``(coeff_vector, relation, rhs)`` tuples.

        ``bounds`` is a sequence of ``(lo, hi)`` pairs; ``None`` entries mean
        unbounded.  Without ``bounds`` every variable is free.
        """
        objective = np.asarray(objective, dtype=float).ravel()
        n = objective.size
        if bounds is None:
            lower, upper = np.full(n, -np.inf), np.full(n, np.inf)
        else:
            bounds = list(bounds)
            if len(bounds) != n:
                raise LpError(f"{len(bounds)} bounds for {n} variables")
            lower = np.array([-np.inf if b[0] is None else b[0] for b in bounds], dtype=float)
            upper = np.array([np.inf if b[1] is None else b[1] for b in bounds], dtype=float)
        rows, relations, rhs = [], [], []
        for coeffs, relation, value in constraints:
            coeffs = np.asarray(coeffs, dtype=float).ravel()
            if coeffs.size != n:
                raise LpError(f"constraint has {coeffs.size} coefficients, expected {n}")
            rows.append(coeffs)
            relations.append(relation)
            rhs.append(value)
        matrix = np.vstack(rows) if rows else np.zeros((0, n))
        return cls(objective, lower, upper, matrix, relations, np.asarray(rhs, dtype=float))

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_constraints(self) -> int:
        return self.rhs.size

    @property
    def constraints(self):
        dense = self.matrix.toarray()
        return [(dense[i], self.relations[i], self.rhs[i]) for i in range(self.num_constraints)]

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper bounds on each row activity ``A x``."""
        lo = np.full(self.num_constraints, -np.inf)
        hi = np.full(self.num_constraints, np.inf)
        for i, rel in enumerate(self.relations):
            if rel is not Relation.GE:
                hi[i] = self.rhs[i]
            if rel is not Relation.LE:
                lo[i] = self.rhs[i]
        return lo, hi

    def max_violation(self, x) -> float:
        """Largest bound or row violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        act = self.matrix @ x
        rlo, rhi = self.row_bounds()
        parts = [0.0,
                 np.max(self.lower - x, initial=0.0),
                 np.max(x - self.upper, initial=0.0),
                 np.max(rlo - act, initial=0.0),
                 np.max(act - rhi, initial=0.0)]
        return float(max(parts))


def _bound_array(values, n, default, name):
    if values is None:
        return np.full(n, default)
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size != n:
        raise LpError(f"{name} bounds have length {arr.size}, expected {n}")
    return arr.copy()


@dataclass
class LpOutcome:
    status: LpStatus
    x: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    iterations: int = 0
    basis: Optional[Basis] = None
    #: reduced costs of all variables (structural then logical) at the final basis
    reduced_costs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class BoundedSimplex:
    """Reusable solver for one constraint matrix under varying bounds.

    The matrix, objective and row relations are fixed at construction;
    :meth:`solve` accepts per-call variable bounds and an optional starting
    basis.
    """

    def __init__(self, problem: LpProblem, tolerances: LpTolerances | None = None):
        self.problem = problem
        self.tol = tolerances or LpTolerances()
        n, m = problem.num_vars, problem.num_constraints
        self.n, self.m = n, m
        self.A = problem.matrix.tocsr()
        self.AT = self.A.T.tocsr()
        full = sp.hstack([problem.matrix, -sp.identity(m, format="csr")], format="csc")
        self._indptr = full.indptr
        self._indices = full.indices
        self._data = full.data
        self.cost = np.concatenate([problem.objective, np.zeros(m)])
        self.row_lo, self.row_hi = problem.row_bounds()
        self.bland_after = self.tol.bland_after if self.tol.bland_after is not None else max(5 * m, 50)

    # -- linear algebra helpers -------------------------------------------------
    def _column(self, j):
        a, b = self._indptr[j], self._indptr[j + 1]
        return self._indices[a:b], self._data[a:b]

    def _factor(self, head):
        """Explicit inverse of the basis matrix, exploiting the ``-I`` logical columns.

        With structural basics ``S`` and logical basics on rows ``L`` the
        basis is block triangular once the remaining rows ``N`` come first,
        so only ``A[N, S]`` needs a dense inverse.
        """
        m, n = self.m, self.n
        head = np.asarray(head)
        is_struct = head < n
        pos_s = np.flatnonzero(is_struct)
        pos_l = np.flatnonzero(~is_struct)
        rows_l = head[pos_l] - n
        covered = np.zeros(m, dtype=bool)
        covered[rows_l] = True
        rows_n = np.flatnonzero(~covered)
        if rows_n.size != pos_s.size:
            raise SimplexError("singular basis")
        Binv = np.zeros((m, m), order="F")
        if pos_s.size:
            cols = self.A[:, head[pos_s]]
            B11 = cols[rows_n].toarray()
            try:
                inv11 = np.linalg.inv(B11)
            except np.linalg.LinAlgError as exc:
                raise SimplexError("singular basis") from exc
            if not np.all(np.isfinite(inv11)):
                raise SimplexError("singular basis")
            Binv[np.ix_(pos_s, rows_n)] = inv11
            if pos_l.size:
                Binv[np.ix_(pos_l, rows_n)] = cols[rows_l] @ inv11
        Binv[pos_l, rows_l] = -1.0
        return Binv

    def _basic_values(self, Binv, head, x):
        xn = x.copy()
        xn[head] = 0.0
        act = self.A @ xn[: self.n] - xn[self.n:]
        return -(Binv @ act)

    # -- main entry point -----------------------------------------------------------
    def solve(self, lower=None, upper=None, basis: Basis | None = None) -> LpOutcome:
        n, m, tol = self.n, self.m, self.tol
        lo = np.concatenate([self.problem.lower if lower is None else np.asarray(lower, float),
                             self.row_lo])
        hi = np.concatenate([self.problem.upper if upper is None else np.asarray(upper, float),
                             self.row_hi])
        if np.any(lo[:n] > hi[:n] + tol.feasibility):
            return LpOutcome(LpStatus.INFEASIBLE)
        fixed = hi - lo <= 0.0

        if basis is None or len(basis.head) != m:
            head = np.arange(n, n + m)
            status = np.where(np.isfinite(lo), AT_LOWER, np.where(np.isfinite(hi), AT_UPPER, FREE_ZERO))
            status[head] = BASIC
        else:
            head = np.array(basis.head, dtype=int)
            status = np.array(basis.status, dtype=int)
        # reconcile nonbasic statuses with the (possibly new) bounds
        nb = status != BASIC
        want_upper = (status == AT_UPPER) & np.isfinite(hi)
        status[nb] = np.where(np.isfinite(lo[nb]), AT_LOWER,
                              np.where(np.isfinite(hi[nb]), AT_UPPER, FREE_ZERO))
        status[nb & want_upper] = AT_UPPER
        x = np.zeros(n + m)
        x[status == AT_LOWER] = lo[status == AT_LOWER]
        x[status == AT_UPPER] = hi[status == AT_UPPER]

        try:
            Binv = self._factor(head)
        except SimplexError:
            if basis is None:
                raise
            return self.solve(lower, upper, None)
        xB = self._basic_values(Binv, head, x)

        ftol, dtol, ptol = tol.feasibility, tol.reduced_cost, tol.pivot
        since_refactor = 0
        stall = 0
        iterations = 0
        rechecks = 0
        last_obj = np.inf
        last_phase1 = None
        cost = self.cost
        while True:
            if iterations >= tol.max_iterations:
                raise SimplexError(f"iteration limit {tol.max_iterations} reached")
            loB, hiB = lo[head], hi[head]
            below = xB < loB - ftol
            above = xB > hiB + ftol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cB = below * -1.0 + above * 1.0
                obj = float(np.sum(loB[below] - xB[below]) + np.sum(xB[above] - hiB[above]))
            else:
                cB = cost[head]
                obj = float(cB @ xB + cost[status != BASIC] @ x[status != BASIC])
            y = cB @ Binv
            d = np.empty(n + m)
            if phase1:
                d[:n] = -(self.AT @ y)
            else:
                d[:n] = cost[:n] - self.AT @ y
            d[n:] = y
            d[head] = 0.0

            eligible = ((status == AT_LOWER) & (d < -dtol)) | ((status == AT_UPPER) & (d > dtol)) \
                | ((status == FREE_ZERO) & (np.abs(d) > dtol))
            eligible &= ~fixed
            candidates = np.flatnonzero(eligible)
            if candidates.size == 0:
                # confirm on a fresh factorisation before declaring a result
                if since_refactor and rechecks < 3:
                    Binv = self._factor(head)
                    xB = self._basic_values(Binv, head, x)
                    since_refactor = 0
                    rechecks += 1
                    continue
                if phase1:
                    return LpOutcome(LpStatus.INFEASIBLE, iterations=iterations)
                x[head] = xB
                full_d = d.copy()
                xs = x[:n].copy()
                return LpOutcome(LpStatus.OPTIMAL, x=xs, objective_value=float(self.problem.objective @ xs),
                                 iterations=iterations, basis=Basis(head.copy(), status.copy()),
                                 reduced_costs=full_d)

            if phase1 != last_phase1:
                last_obj, last_phase1 = np.inf, phase1
            if obj < last_obj - 1e-12 * max(1.0, abs(obj)):
                stall = 0
            else:
                stall += 1
            last_obj = obj
            bland = stall > self.bland_after
            if bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(np.abs(d[candidates]))])
            direction = 1.0 if d[q] < 0 else -1.0

            rows, vals = self._column(q)
            alpha = Binv[:, rows] @ vals
            delta = -direction * alpha

            # ratio test
            t_best, r_best, bound_hit = np.inf, -1, 0
            dec = delta < -ptol
            inc = delta > ptol
            ratios = np.full(m, np.inf)
            hit_upper = np.zeros(m, dtype=bool)
            # decreasing basics
            idx = np.flatnonzero(dec & above)
            ratios[idx] = (xB[idx] - hiB[idx]) / -delta[idx]
            hit_upper[idx] = True
            idx = np.flatnonzero(dec & ~above & ~below & np.isfinite(loB))
            ratios[idx] = (xB[idx] - loB[idx]) / -delta[idx]
            # increasing basics
            idx = np.flatnonzero(inc & below)
            ratios[idx] = (loB[idx] - xB[idx]) / delta[idx]
            idx = np.flatnonzero(inc & ~above & ~below & np.isfinite(hiB))
            ratios[idx] = (hiB[idx] - xB[idx]) / delta[idx]
            hit_upper[idx] = True
            np.maximum(ratios, 0.0, out=ratios)
            if m:
                t_best = float(ratios.min())
            if np.isfinite(t_best):
                ties = np.flatnonzero(ratios <= t_best + 1e-12)
                if bland:
                    r_best = int(ties[np.argmin(head[ties])])
                else:
                    r_best = int(ties[np.argmax(np.abs(delta[ties]))])
                bound_hit = AT_UPPER if hit_upper[r_best] else AT_LOWER
            t_flip = hi[q] - lo[q] if status[q] != FREE_ZERO else np.inf

            if not np.isfinite(t_best) and not np.isfinite(t_flip):
                if phase1:
                    raise SimplexError("phase 1 direction without a blocking variable")
                return LpOutcome(LpStatus.UNBOUNDED, iterations=iterations)

            iterations += 1
            if t_flip <= t_best:
                xB += delta * t_flip
                if status[q] == AT_LOWER:
                    status[q], x[q] = AT_UPPER, hi[q]
                else:
                    status[q], x[q] = AT_LOWER, lo[q]
                continue

            t = t_best
            xB += delta * t
            leaving = head[r_best]
            entering_value = x[q] + direction * t
            if bound_hit == AT_UPPER:
                x[leaving] = hi[leaving]
                status[leaving] = AT_UPPER if lo[leaving] < hi[leaving] else AT_LOWER
            else:
                x[leaving] = lo[leaving]
                status[leaving] = AT_LOWER
            head[r_best] = q
            status[q] = BASIC
            x[q] = 0.0
            xB[r_best] = entering_value

            since_refactor += 1
            if since_refactor >= tol.refactor_every:
                Binv = self._factor(head)
                xB = self._basic_values(Binv, head, x)
                since_refactor = 0
            else:
                piv = alpha[r_best]
                row = Binv[r_best, :] / piv
                alpha_mod = alpha.copy()
                alpha_mod[r_best] = 0.0
                Binv = dger(-1.0, alpha_mod, row, a=Binv, overwrite_a=1)
                Binv[r_best, :] = row


def solve_lp(problem: LpProblem, tolerances: LpTolerances | None = None) -> LpOutcome:
    """Solve ``problem`` from scratch with the bounded-variable primal simplex."""
    if not isinstance(problem, LpProblem):
        raise LpError("solve_lp expects an LpProblem")
    return BoundedSimplex(problem, tolerances).solve()

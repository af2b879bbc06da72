"""Independent reference solvers used by the tests.

Nothing here touches the package's simplex or branch-and-bound code:
LPs are solved by enumerating vertices, MILPs by enumerating every
binary assignment and handing the residual LP to HiGHS through scipy.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from clusterplan.model import MilpModel


def _as_inequalities(c, lower, upper, A, relations, rhs):
    """Stack rows and bounds as ``G x <= h``."""
    n = len(c)
    G, h = [], []
    for row, rel, b in zip(np.atleast_2d(A).reshape(-1, n), relations, rhs):
        if rel in ("<=", "=="):
            G.append(row)
            h.append(b)
        if rel in (">=", "=="):
            G.append(-row)
            h.append(-b)
    eye = np.eye(n)
    for j in range(n):
        G.append(-eye[j])
        h.append(-lower[j])
        G.append(eye[j])
        h.append(upper[j])
    return np.array(G, float), np.array(h, float)


def lp_by_vertices(c, lower, upper, A, relations, rhs, tol: float = 1e-9):
    """Optimum of a box-bounded LP by checking every basic solution.

    Returns ``(None, None)`` when infeasible, else ``(value, x)``.  Only
    sensible for a handful of variables.
    """
    c = np.asarray(c, float)
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ValueError("vertex enumeration needs finite bounds")
    G, h = _as_inequalities(c, lower, upper, A, relations, rhs)
    n = c.size
    best, arg = None, None
    for rows in itertools.combinations(range(G.shape[0]), n):
        sub = G[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(rows)])
        if np.all(G @ x <= h + tol * (1 + np.abs(h))):
            value = float(c @ x)
            if best is None or value < best - 1e-12:
                best, arg = value, x
    return best, arg


@dataclass
class OracleResult:
    status: str                     # "optimal", "infeasible" or "unbounded"
    objective: Optional[float] = None
    binaries: Optional[list] = None


def brute_force_milp(model: MilpModel) -> OracleResult:
    """Enumerate every binary assignment and solve the remaining LP with HiGHS."""
    lp = model.relax()
    c = lp.objective
    A = lp.matrix.toarray()
    lo, hi = lp.lower.copy(), lp.upper.copy()
    bins = model.binary_indices()
    le = [i for i, r in enumerate(lp.relations) if r.value == "<="]
    ge = [i for i, r in enumerate(lp.relations) if r.value == ">="]
    eq = [i for i, r in enumerate(lp.relations) if r.value == "=="]
    A_ub = np.vstack([A[le], -A[ge]]) if le or ge else None
    b_ub = np.concatenate([lp.rhs[le], -lp.rhs[ge]]) if le or ge else None
    A_eq = A[eq] if eq else None
    b_eq = lp.rhs[eq] if eq else None
    best = OracleResult("infeasible")
    for bits in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo[bins] = bits
        hi[bins] = bits
        bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b) for a, b in zip(lo, hi)]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if res.status == 4:
            # presolve may stop at "infeasible or unbounded"; decide feasibility separately
            probe = linprog(np.zeros_like(c), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                            method="highs")
            if probe.status == 2:
                continue
            res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs",
                          options={"presolve": False})
        if res.status == 3:
            return OracleResult("unbounded", binaries=list(bits))
        if res.status == 0:
            value = float(res.fun) + model.objective_constant
            if best.objective is None or value < best.objective:
                best = OracleResult("optimal", value, list(bits))
        elif res.status != 2:
            raise RuntimeError(f"HiGHS returned status {res.status}: {res.message}")
    return best


def random_milp(seed: int, max_binaries: int = 12, max_continuous: int = 20) -> MilpModel:
    """Seeded random MILP with at most the given numbers of binaries and continuous variables.

    Most instances are built around a hidden feasible point; about one in
    five uses unrelated right-hand sides, some carry a parity row that no
    binary assignment satisfies although the relaxation can, and a few have
    free continuous variables so that unboundedness can occur.
    """
    rng = np.random.default_rng(seed)
    nb = int(rng.integers(1, max_binaries + 1))
    nc = int(rng.integers(0, max_continuous + 1))
    m = int(rng.integers(1, 9))
    free = rng.random() < 0.1
    anchored = rng.random() < 0.8
    parity = rng.random() < 0.15
    model = MilpModel(f"random_{seed}")
    xb = [model.add_binary(f"b{i}") for i in range(nb)]
    xc = []
    for i in range(nc):
        if free and i < 2:
            xc.append(model.add_continuous(f"x{i}"))
        else:
            lo = float(rng.integers(-5, 1))
            xc.append(model.add_continuous(f"x{i}", lo, lo + float(rng.integers(1, 8))))
    handles = xb + xc
    point = np.concatenate([rng.integers(0, 2, nb).astype(float),
                            [0.0 if (free and i < 2) else model.spec(h).lower + rng.random()
                             * (model.spec(h).upper - model.spec(h).lower) for i, h in enumerate(xc)]])
    for r in range(m):
        coef = rng.integers(-5, 6, size=len(handles)).astype(float)
        coef[rng.random(len(handles)) < 0.5] = 0.0
        relation = rng.choice(["<=", ">=", "=="], p=[0.45, 0.4, 0.15])
        act = float(coef @ point)
        if anchored:
            slack = float(rng.integers(0, 4))
            rhs = act + slack if relation == "<=" else act - slack if relation == ">=" else act
        else:
            rhs = float(rng.integers(-10, 11))
        model.add_constraint(list(zip(handles, coef)), relation, round(rhs, 6), name=f"r{r}")
    if parity:
        # even left-hand side, odd right-hand side: LP-feasible, integer-infeasible
        k = min(nb, 6)
        model.add_constraint([(h, 2.0) for h in xb[:k]], "==", float(2 * int(rng.integers(0, k)) + 1),
                             name="parity")
    obj = rng.integers(-6, 7, size=len(handles)).astype(float)
    model.set_objective(list(zip(handles, obj)), constant=float(rng.integers(-3, 4)))
    return model


def model_fingerprint(model: MilpModel) -> str:
    """Short digest of the model's LP-text dump, used to detect generator drift."""
    return hashlib.sha256(model.to_lp_text().encode()).hexdigest()[:16]

"""Incremental builder for mixed binary linear models."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .lp import LpProblem, Relation

__all__ = ["VarKind", "VarSpec", "VarHandle", "ModelError", "MilpModel"]

_model_ids = itertools.count()


class ModelError(ValueError):
    pass


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


@dataclass(frozen=True)
class VarSpec:
    name: str
    kind: VarKind = VarKind.CONTINUOUS
    lower: float = -math.inf
    upper: float = math.inf

    @classmethod
    def binary(cls, name: str) -> "VarSpec":
        return cls(name, VarKind.BINARY, 0.0, 1.0)

    @classmethod
    def continuous(cls, name: str, lower: float = -math.inf, upper: float = math.inf) -> "VarSpec":
        return cls(name, VarKind.CONTINUOUS, lower, upper)


@dataclass(frozen=True)
class VarHandle:
    index: int
    model_id: int

    def __index__(self) -> int:
        return self.index


class MilpModel:
    """Variables, sparse linear constraints and a linear objective (minimised).

    Variables and constraints keep insertion order, so two models built by
    the same sequence of calls are identical down to their LP relaxations.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self._id = next(_model_ids)
        self.vars: list[VarSpec] = []
        self._names: dict[str, int] = {}
        self._rows_idx: list[np.ndarray] = []
        self._rows_val: list[np.ndarray] = []
        self.relations: list[Relation] = []
        self.rhs: list[float] = []
        self.row_names: list[str | None] = []
        self._objective: dict[int, float] = {}
        self.objective_constant = 0.0

    # -- variables --------------------------------------------------------------------
    def add_var(self, spec: VarSpec) -> VarHandle:
        if spec.name in self._names:
            raise ModelError(f"duplicate variable name {spec.name!r}")
        lo, hi = float(spec.lower), float(spec.upper)
        if spec.kind is VarKind.BINARY:
            if (lo, hi) != (0.0, 1.0):
                raise ModelError(f"binary variable {spec.name!r} must have bounds [0, 1]")
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise ModelError(f"invalid bounds [{lo}, {hi}] for {spec.name!r}")
        self._names[spec.name] = len(self.vars)
        self.vars.append(spec)
        return VarHandle(len(self.vars) - 1, self._id)

    def add_binary(self, name: str) -> VarHandle:
        return self.add_var(VarSpec.binary(name))

    def add_continuous(self, name: str, lower: float = -math.inf, upper: float = math.inf) -> VarHandle:
        return self.add_var(VarSpec.continuous(name, lower, upper))

    def handle(self, name: str) -> VarHandle:
        try:
            return VarHandle(self._names[name], self._id)
        except KeyError:
            raise ModelError(f"no variable named {name!r}") from None

    def handle_at(self, index: int) -> VarHandle:
        if not 0 <= index < len(self.vars):
            raise ModelError(f"no variable at index {index}")
        return VarHandle(int(index), self._id)

    def spec(self, handle: VarHandle) -> VarSpec:
        return self.vars[self._check(handle)]

    def _check(self, handle) -> int:
        if not isinstance(handle, VarHandle) or handle.model_id != self._id:
            raise ModelError(f"handle {handle!r} does not belong to model {self.name!r}")
        if not 0 <= handle.index < len(self.vars):
            raise ModelError(f"stale handle {handle!r}")
        return handle.index

    @property
    def num_vars(self) -> int:
        return len(self.vars)

    @property
    def num_constraints(self) -> int:
        return len(self.rhs)

    def binary_indices(self) -> np.ndarray:
        return np.array([i for i, v in enumerate(self.vars) if v.kind is VarKind.BINARY], dtype=int)

    def count_binaries(self, prefix: str = "") -> int:
        return sum(1 for v in self.vars if v.kind is VarKind.BINARY and v.name.startswith(prefix))

    # -- constraints / objective ----------------------------------------------------------
    def _terms(self, coeffs: Iterable[tuple[VarHandle, float]]):
        acc: dict[int, float] = {}
        for handle, value in coeffs:
            idx = self._check(handle)
            value = float(value)
            if not math.isfinite(value):
                raise ModelError(f"non-finite coefficient {value} on {self.vars[idx].name!r}")
            acc[idx] = acc.get(idx, 0.0) + value
        return acc

    def add_constraint(self, coeffs: Iterable[tuple[VarHandle, float]], relation, rhs: float,
                       name: str | None = None) -> int:
        """Add ``sum(c * v) <relation> rhs`` and return the row id."""
        relation = Relation.parse(relation)
        rhs = float(rhs)
        if not math.isfinite(rhs):
            raise ModelError(f"non-finite right-hand side {rhs}")
        acc = self._terms(coeffs)
        order = sorted(acc)
        self._rows_idx.append(np.array(order, dtype=int))
        self._rows_val.append(np.array([acc[i] for i in order], dtype=float))
        self.relations.append(relation)
        self.rhs.append(rhs)
        self.row_names.append(name)
        return len(self.rhs) - 1

    def set_objective(self, coeffs: Iterable[tuple[VarHandle, float]], constant: float = 0.0):
        self._objective = self._terms(coeffs)
        self.objective_constant = float(constant)

    def add_objective(self, coeffs: Iterable[tuple[VarHandle, float]], constant: float = 0.0):
        for idx, value in self._terms(coeffs).items():
            self._objective[idx] = self._objective.get(idx, 0.0) + value
        self.objective_constant += float(constant)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        for idx, value in self._objective.items():
            c[idx] = value
        return c

    def matrix(self) -> sp.csr_matrix:
        indptr = np.zeros(self.num_constraints + 1, dtype=int)
        indptr[1:] = np.cumsum([len(r) for r in self._rows_idx])
        indices = np.concatenate(self._rows_idx) if self._rows_idx else np.zeros(0, dtype=int)
        data = np.concatenate(self._rows_val) if self._rows_val else np.zeros(0)
        return sp.csr_matrix((data, indices, indptr), shape=(self.num_constraints, self.num_vars))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([v.lower for v in self.vars], dtype=float)
        hi = np.array([v.upper for v in self.vars], dtype=float)
        return lo, hi

    # -- derived problems and checks ---------------------------------------------------------
    def relax(self) -> LpProblem:
        """LP relaxation: same rows and objective, binaries become [0, 1] continuous.

        The objective constant is not part of the LP; add
        :attr:`objective_constant` to LP objective values.
        """
        lo, hi = self.bounds()
        return LpProblem(self.objective_vector(), lo, hi, self.matrix(), list(self.relations),
                         np.array(self.rhs, dtype=float))

    def objective_value(self, x) -> float:
        return float(self.objective_vector() @ np.asarray(x, dtype=float) + self.objective_constant)

    def violations(self, x, tol: float = 1e-7, integrality_tol: float = 1e-6) -> list[str]:
        """Describe every bound, row and integrality violation of ``x``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.num_vars,):
            return [f"assignment has shape {x.shape}, expected ({self.num_vars},)"]
        out = []
        for i, v in enumerate(self.vars):
            if x[i] < v.lower - tol or x[i] > v.upper + tol:
                out.append(f"{v.name}={x[i]:.9g} outside [{v.lower}, {v.upper}]")
            if v.kind is VarKind.BINARY and min(abs(x[i]), abs(x[i] - 1.0)) > integrality_tol:
                out.append(f"{v.name}={x[i]:.9g} not integral")
        for r in range(self.num_constraints):
            act = float(self._rows_val[r] @ x[self._rows_idx[r]])
            rel, rhs = self.relations[r], self.rhs[r]
            bad = (rel is Relation.LE and act > rhs + tol) or (rel is Relation.GE and act < rhs - tol) \
                or (rel is Relation.EQ and abs(act - rhs) > tol)
            if bad:
                label = self.row_names[r] or f"row{r}"
                out.append(f"{label}: {act:.9g} {rel.value} {rhs:.9g} violated")
        return out

    def is_feasible(self, x, tol: float = 1e-7, integrality_tol: float = 1e-6) -> bool:
        return not self.violations(x, tol, integrality_tol)

    # -- debug dump --------------------------------------------------------------------------
    def to_lp_text(self) -> str:
        """Plain-text dump in an LP-format-like layout (see README)."""
        names = [v.name for v in self.vars]

        def expr(items):
            parts = [f"{'+' if c >= 0 else '-'} {abs(c):.17g} {names[i]}" for i, c in items]
            return " ".join(parts) if parts else "0"

        lines = [f"\\ model {self.name}", "minimize"]
        obj = expr(sorted(self._objective.items()))
        lines.append(f" obj: {obj} + {self.objective_constant:.17g}")
        lines.append("subject to")
        for r in range(self.num_constraints):
            label = self.row_names[r] or f"c{r}"
            terms = expr(zip(self._rows_idx[r].tolist(), self._rows_val[r].tolist()))
            lines.append(f" {label}: {terms} {self.relations[r].value} {self.rhs[r]:.17g}")
        lines.append("bounds")
        for v in self.vars:
            if v.kind is VarKind.CONTINUOUS:
                lines.append(f" {_num(v.lower)} <= {v.name} <= {_num(v.upper)}")
        lines.append("binaries")
        for v in self.vars:
            if v.kind is VarKind.BINARY:
                lines.append(f" {v.name}")
        lines.append("end")
        return "\n".join(lines) + "\n"


def _num(value: float) -> str:
    if value == math.inf:
        return "+inf"
    if value == -math.inf:
        return "-inf"
    return f"{value:.17g}"

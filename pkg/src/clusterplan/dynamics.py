"""Planar double integrator and zero-order-hold discretisation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LtiContinuous", "LtiDiscrete", "double_integrator_2d", "zoh_discretize", "position_selector"]


@dataclass(frozen=True)
class LtiContinuous:
    A_c: np.ndarray
    B_c: np.ndarray

    def __post_init__(self):
        A, B = np.atleast_2d(np.asarray(self.A_c, float)), np.asarray(self.B_c, float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise ValueError(f"inconsistent shapes A_c {A.shape}, B_c {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("system matrices must be finite")
        object.__setattr__(self, "A_c", A)
        object.__setattr__(self, "B_c", B)

    @property
    def n_states(self) -> int:
        return self.A_c.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B_c.shape[1]


@dataclass(frozen=True)
class LtiDiscrete:
    A: np.ndarray
    B: np.ndarray
    Ts: float

    def step(self, x, u) -> np.ndarray:
        return self.A @ np.asarray(x, float) + self.B @ np.asarray(u, float)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]


def double_integrator_2d() -> LtiContinuous:
    """Point mass in the plane, state ``[r_x, v_x, r_y, v_y]``, input ``[a_x, a_y]``."""
    A_c = np.zeros((4, 4))
    A_c[0, 1] = A_c[2, 3] = 1.0
    B_c = np.zeros((4, 2))
    B_c[1, 0] = B_c[3, 1] = 1.0
    return LtiContinuous(A_c, B_c)


def position_selector() -> np.ndarray:
    """Matrix picking ``[r_x, r_y]`` out of the double-integrator state."""
    C = np.zeros((2, 4))
    C[0, 0] = C[1, 2] = 1.0
    return C


def zoh_discretize(sys: LtiContinuous, Ts: float, tol: float = 1e-15,
                   max_terms: int = 200) -> LtiDiscrete:
    """Zero-order-hold discretisation through the augmented matrix exponential.

    ``exp([[A_c, B_c], [0, 0]] * Ts) = [[A, B], [0, I]]``.  The exponential
    is summed as a Taylor series until a term's max-norm drops below ``tol``
    (relative to the running sum); for nilpotent ``A_c`` the series ends
    after finitely many terms and the result is exact.
    """
    Ts = float(Ts)
    if not np.isfinite(Ts) or Ts <= 0:
        raise ValueError(f"sample period must be positive and finite, got {Ts}")
    n, m = sys.n_states, sys.n_inputs
    M = np.zeros((n + m, n + m))
    M[:n, :n] = sys.A_c * Ts
    M[:n, n:] = sys.B_c * Ts
    total = np.eye(n + m)
    term = np.eye(n + m)
    for k in range(1, max_terms + 1):
        term = term @ M / k
        total = total + term
        size = np.abs(term).max()
        if size == 0.0 or size <= tol * max(1.0, np.abs(total).max()):
            break
    else:
        raise ValueError("Taylor series did not converge; reduce Ts or rescale the system")
    return LtiDiscrete(total[:n, :n].copy(), total[:n, n:].copy(), Ts)

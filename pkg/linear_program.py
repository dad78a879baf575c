"""Backend-agnostic LP container and its HiGHS-backed solver.

    minimize    c^T x
    subject to  G x >= h,  lo_k <= x_k <= hi_k
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from errors import DimensionError, LPError, LPInfeasibleError, LPUnboundedError

logger = logging.getLogger(__name__)

Bound = Tuple[Optional[float], Optional[float]]

# dual simplex returns a basic (vertex) solution and is deterministic
LP_METHOD = "highs-ds"


@dataclass
class LinearProgram:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    bounds: List[Bound]

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        self.h = np.asarray(self.h, dtype=float).ravel()
        n_var = self.c.size
        if self.G.size == 0:
            self.G = np.zeros((0, n_var))
        if self.G.shape[1] != n_var or self.G.shape[0] != self.h.size:
            raise DimensionError(f"constraint block {self.G.shape} / rhs {self.h.size} "
                                 f"does not match {n_var} variables")
        if len(self.bounds) != n_var:
            raise DimensionError(f"expected {n_var} bounds, got {len(self.bounds)}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.G)) and np.all(np.isfinite(self.h))):
            raise ValueError("LP coefficients must be finite")

    @property
    def n_vars(self) -> int:
        return self.c.size

    def slack(self, x: np.ndarray) -> np.ndarray:
        """G x - h; non-negative entries mean satisfied rows"""
        return self.G @ np.asarray(x, dtype=float) - self.h

    def with_bounds(self, bounds: Sequence[Bound]) -> "LinearProgram":
        return LinearProgram(c=self.c, G=self.G, h=self.h, bounds=list(bounds))


@dataclass(frozen=True)
class LPSolution:
    x: np.ndarray
    objective: float
    iterations: int
    message: str


def solve_lp(lp: LinearProgram) -> LPSolution:
    has_rows = lp.G.shape[0] > 0
    result = linprog(lp.c, A_ub=-lp.G if has_rows else None, b_ub=-lp.h if has_rows else None,
                     bounds=lp.bounds, method=LP_METHOD)
    if result.status == 0:
        return LPSolution(x=np.asarray(result.x, dtype=float), objective=float(result.fun),
                          iterations=int(getattr(result, "nit", 0) or 0), message=result.message)
    if result.status == 2:
        raise LPInfeasibleError(f"LP infeasible: {result.message}", status=result.status)
    if result.status == 3:
        raise LPUnboundedError(f"LP unbounded: {result.message}", status=result.status)
    raise LPError(f"LP solver failed with status {result.status}: {result.message}", status=result.status)

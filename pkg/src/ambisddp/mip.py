"""Best-bound branch-and-bound for mixed-binary (and small general integer) LPs."""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import Infeasible, ModelError, NodeLimit, Unbounded
from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, StandardForm, solve_with_bounds

TOL_MIP = 1e-4
INT_TOL = 1e-6


@dataclass
class MipProblem:
    base: LpProblem
    integer_columns: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.integer_columns = np.asarray(self.integer_columns, dtype=np.int64).ravel()
        cols = self.integer_columns
        if cols.size and (cols.min() < 0 or cols.max() >= self.base.num_cols):
            raise ModelError("integer column index out of range")
        lo, up = self.base.lower[cols], self.base.upper[cols]
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise ModelError("integer columns need finite bounds")

    @property
    def binary_columns(self) -> np.ndarray:
        cols = self.integer_columns
        keep = (self.base.lower[cols] >= 0) & (self.base.upper[cols] <= 1)
        return cols[keep]


@dataclass
class MipSolution:
    status: str
    primal: np.ndarray
    objective: float
    incumbent_bound: float
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def lp_relaxation(p: MipProblem) -> LpProblem:
    """Same problem with integrality dropped; binary bounds stay [0, 1]."""
    b = p.base
    return replace(b, lower=b.lower.copy(), upper=b.upper.copy())


def solve_mip(p: MipProblem, tol_mip: float = TOL_MIP, node_limit: int = 200_000) -> MipSolution:
    """Solve to a relative gap of ``tol_mip``.

    Nodes are processed in best-bound order (deeper first on ties); the
    branching column is the most fractional one, lowest index on ties.
    ``incumbent_bound`` is the proven bound from the tree, a lower bound for
    minimization and an upper bound for maximization.
    """
    base = p.base
    sf = StandardForm(base)
    ints = p.integer_columns
    sgn = -1.0 if base.maximize else 1.0
    lo0 = np.ceil(base.lower - INT_TOL)
    up0 = np.floor(base.upper + INT_TOL)
    lower = base.lower.copy()
    upper = base.upper.copy()
    lower[ints] = lo0[ints]
    upper[ints] = up0[ints]

    root = solve_with_bounds(sf, lower, upper)
    if root.status == INFEASIBLE:
        raise Infeasible("MIP relaxation infeasible")
    if root.status == UNBOUNDED:
        raise Unbounded("MIP relaxation unbounded")
    if ints.size == 0:
        return MipSolution(OPTIMAL, root.primal, root.objective, root.objective, 1)

    counter = itertools.count()
    heap = [(sgn * root.objective, 0, next(counter), lower, upper, root)]
    best_obj = np.inf  # min-sense
    best_x = None
    nodes = 1
    global_bound = sgn * root.objective
    pruned_min = np.inf  # children dropped within the gap still bound the optimum

    def gap_closed(bound):
        return best_obj - bound <= tol_mip * (1.0 + abs(best_obj))

    while heap:
        bound, negdepth, _, lo, up, sol = heapq.heappop(heap)
        global_bound = bound
        if best_x is not None and gap_closed(bound):
            break
        xi = sol.primal[ints]
        frac = np.abs(xi - np.round(xi))
        if frac.max() <= INT_TOL:
            if bound < best_obj:
                best_obj = bound
                best_x = sol.primal.copy()
                best_x[ints] = np.round(xi)
            continue
        k = int(np.argmax(frac))  # first index among ties
        j = ints[k]
        v = sol.primal[j]
        for child_lo, child_up in ((lo[j], np.floor(v)), (np.ceil(v), up[j])):
            if child_lo > child_up:
                continue
            clo, cup = lo.copy(), up.copy()
            clo[j], cup[j] = child_lo, child_up
            if nodes >= node_limit:
                raise NodeLimit(f"branch-and-bound exceeded {node_limit} nodes")
            nodes += 1
            cs = solve_with_bounds(sf, clo, cup)
            if cs.status != OPTIMAL:
                continue
            cb = sgn * cs.objective
            if best_x is not None and cb >= best_obj - tol_mip * (1.0 + abs(best_obj)):
                pruned_min = min(pruned_min, cb)
                continue
            heapq.heappush(heap, (cb, negdepth - 1, next(counter), clo, cup, cs))
    else:
        global_bound = best_obj

    if best_x is None:
        raise Infeasible("no integer feasible point")
    global_bound = min(global_bound, best_obj, pruned_min)
    return MipSolution(OPTIMAL, best_x, sgn * best_obj, sgn * global_bound, nodes)

"""Dense bounded-variable simplex with dual extraction.

Problems are stated as::

    min/max  c @ x
    s.t.     A[i] @ x  (<=, =, >=)  rhs[i]
             lower <= x <= upper

Internally every problem is moved to a standard form with nonnegative
shifted columns, explicit slacks and nonnegative right-hand sides, then solved
by a two-phase primal simplex whose iteration loop lives in ``_kernel``.
The basis is refactorized between chunks of iterations and once more at the
end so that the reported primal and dual vectors are computed directly from
the final basis matrix rather than from the accumulated tableau.
"""
from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernel
from .errors import DimensionMismatch, ModelError, NumericalFailure

LE, EQ, GE = "<=", "=", ">="
_REL_CODE = {LE: -1, EQ: 0, GE: 1, "L": -1, "E": 0, "G": 1, "==": 0}

TOL_FEAS = 1e-7
TOL_GAP = 1e-7

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


def relation_codes(relations) -> np.ndarray:
    """Map relation strings to -1 (<=), 0 (=), +1 (>=)."""
    try:
        return np.array([_REL_CODE[r] for r in relations], dtype=np.int8)
    except KeyError as exc:
        raise ModelError(f"unknown relation {exc.args[0]!r}") from None


@dataclass
class LpProblem:
    cost: np.ndarray
    A: np.ndarray
    relations: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float).ravel()
        n = self.cost.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if n else np.zeros((len(self.rhs), 0))
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        self.relations = np.asarray(list(self.relations), dtype="<U2")
        m = self.A.shape[0]
        if self.rhs.size != m or self.relations.size != m:
            raise DimensionMismatch(
                f"{m} rows but {self.rhs.size} rhs and {self.relations.size} relations")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise DimensionMismatch("bounds do not match the number of columns")
        relation_codes(self.relations)

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def num_cols(self) -> int:
        return self.cost.size

    @classmethod
    def from_rows(cls, cost, rows, lower=None, upper=None, maximize=False):
        """Build from ``rows = [(sparse dict {col: coef}, relation, rhs), ...]``."""
        n = len(cost)
        A = np.zeros((len(rows), n))
        rel, rhs = [], []
        for i, (coefs, r, b) in enumerate(rows):
            for j, v in coefs.items():
                if not 0 <= j < n:
                    raise DimensionMismatch(f"row {i} references column {j}")
                A[i, j] = v
            rel.append(r)
            rhs.append(b)
        return cls(cost, A, rel, rhs, lower, upper, maximize)


@dataclass
class LpSolution:
    status: str
    primal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = np.nan
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def dual_objective(p: LpProblem, sol: LpSolution) -> float:
    """Objective of the dual solution, including bound multipliers."""
    r = sol.reduced_costs
    sign = -1.0 if p.maximize else 1.0
    # A positive (min-sense) reduced cost pays the lower bound, a negative one the upper.
    rr = sign * r
    lo_term = np.where(rr > 0, r * np.where(np.isfinite(p.lower), p.lower, 0.0), 0.0)
    up_term = np.where(rr < 0, r * np.where(np.isfinite(p.upper), p.upper, 0.0), 0.0)
    return float(p.rhs @ sol.duals + lo_term.sum() + up_term.sum())


class StandardForm:
    """Column transformation of an ``LpProblem`` into nonnegative variables.

    Structural columns ``k`` map back as ``x[orig[k]] += sign[k] * xs[k]`` on
    top of ``offset``. Slack columns follow the structural ones.
    """

    def __init__(self, p: LpProblem):
        lo, up = p.lower, p.upper
        n = p.num_cols
        m = p.num_rows
        fin_lo = np.isfinite(lo)
        fin_up = np.isfinite(up)
        orig, sign, std_up = [], [], []
        offset = np.zeros(n)
        for j in range(n):
            if fin_lo[j]:
                orig.append(j); sign.append(1.0); std_up.append(up[j] - lo[j])
                offset[j] = lo[j]
            elif fin_up[j]:
                orig.append(j); sign.append(-1.0); std_up.append(np.inf)
                offset[j] = up[j]
            else:
                orig.extend((j, j)); sign.extend((1.0, -1.0)); std_up.extend((np.inf, np.inf))
        self.orig = np.array(orig, dtype=np.int64)
        self.sign = np.array(sign)
        self.offset = offset
        self.n_orig = n
        self.bad_bounds = bool(np.any(lo > up))
        codes = relation_codes(p.relations)
        slack_rows = np.flatnonzero(codes != 0)
        ns = self.orig.size
        self.n_struct = ns
        A_struct = p.A[:, self.orig] * self.sign if m else np.zeros((0, ns))
        S = np.zeros((m, slack_rows.size))
        S[slack_rows, np.arange(slack_rows.size)] = -codes[slack_rows]
        self.A = np.ascontiguousarray(np.hstack([A_struct, S]))
        self.slack_rows = slack_rows
        self.slack_coef = -codes[slack_rows].astype(float)
        self.b = p.rhs - p.A @ offset if m else np.zeros(0)
        self.c_sign = -1.0 if p.maximize else 1.0
        min_cost = self.c_sign * p.cost
        self.c = np.concatenate([min_cost[self.orig] * self.sign, np.zeros(slack_rows.size)])
        self.obj_const = float(min_cost @ offset)
        self.upper = np.concatenate([np.array(std_up, dtype=float), np.full(slack_rows.size, np.inf)])
        self.problem = p

    def with_cost(self, cost) -> "StandardForm":
        """Same feasible region, new objective (original space)."""
        new = copy.copy(self)
        new.problem = copy.copy(self.problem)
        new.problem.cost = np.asarray(cost, dtype=float)
        min_cost = self.c_sign * new.problem.cost
        new.c = np.concatenate([min_cost[self.orig] * self.sign, np.zeros(self.slack_rows.size)])
        new.obj_const = float(min_cost @ self.offset)
        return new

    def with_rhs(self, rhs) -> "StandardForm":
        """Same matrix and objective, new right-hand side."""
        new = copy.copy(self)
        new.problem = copy.copy(self.problem)
        new.problem.rhs = np.asarray(rhs, dtype=float)
        new.b = new.problem.rhs - self.problem.A @ self.offset
        return new

    def std_bounds(self, j: int, lo: float, up: float) -> tuple[int, float, float]:
        """Translate bounds on original column ``j`` (with finite lower) to std coords."""
        k = int(np.flatnonzero(self.orig == j)[0])
        return k, lo - self.offset[j], up - self.offset[j]

    def to_original(self, xs: np.ndarray) -> np.ndarray:
        x = self.offset.copy()
        np.add.at(x, self.orig, self.sign * xs[: self.n_struct])
        return x


PIVOT_TOLERANCES = (1e-9, 1e-7, 1e-5)


def _factor(B):
    """LU factors of a basis matrix; numerically singular bases raise ``NumericalFailure``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        try:
            lu = scipy.linalg.lu_factor(B, check_finite=False)
        except (ValueError, np.linalg.LinAlgError):
            raise NumericalFailure("singular basis") from None
    diag = np.abs(np.diag(lu[0]))
    if diag.size and diag.min() <= 1e-12 * max(1.0, diag.max()):
        raise NumericalFailure("singular basis")
    return lu


def _solve_std(sf: StandardForm, lo_s=None, up_s=None, max_iter=None) -> LpSolution:
    """Solve, retrying with larger pivot tolerances when the basis degenerates numerically."""
    for k, tol in enumerate(PIVOT_TOLERANCES):
        try:
            return _solve_std_once(sf, lo_s, up_s, max_iter, tol)
        except NumericalFailure:
            if k == len(PIVOT_TOLERANCES) - 1:
                raise


def _solve_std_once(sf: StandardForm, lo_s=None, up_s=None, max_iter=None,
                    piv_tol: float = 1e-9) -> LpSolution:
    """Two-phase simplex on a standard form with optional std-space column bounds."""
    p = sf.problem
    m, nfull = sf.A.shape
    upper = sf.upper.copy()
    b = sf.b.copy()
    if lo_s is not None:
        nz = np.flatnonzero(lo_s)
        if nz.size:
            b -= sf.A[:, nz] @ lo_s[nz]
        upper -= lo_s
    else:
        lo_s = None
    if up_s is not None:
        upper = np.minimum(upper, up_s - (lo_s if lo_s is not None else 0.0))
    if sf.bad_bounds or np.any(upper < -1e-12):
        return LpSolution(INFEASIBLE)
    upper = np.maximum(upper, 0.0)

    flip = np.where(b < 0, -1.0, 1.0)
    b = b * flip
    # Rows whose slack has +1 after the flip can start with the slack basic.
    slack_basic = np.full(m, -1, dtype=np.int64)
    if sf.slack_rows.size:
        coef = sf.slack_coef * flip[sf.slack_rows]
        ok = coef > 0
        slack_basic[sf.slack_rows[ok]] = sf.n_struct + np.flatnonzero(ok)
    art_rows = np.flatnonzero(slack_basic < 0)
    na = art_rows.size
    ntot = nfull + na
    T = np.zeros((m, ntot))
    T[:, :nfull] = sf.A * flip[:, None]
    T[art_rows, nfull + np.arange(na)] = 1.0
    basis = slack_basic.copy()
    basis[art_rows] = nfull + np.arange(na)
    full_upper = np.concatenate([upper, np.zeros(na)]) if na else upper.copy()
    full_upper[nfull:] = np.inf
    state = np.ones(ntot, dtype=np.int8)
    state[basis] = 0
    can_enter = np.ones(ntot, dtype=np.int8)
    beta = b.copy()
    ctrl = np.zeros(2, dtype=np.int64)
    bland_after = 5 * (m + ntot)
    cap = max_iter if max_iter is not None else 50 * (m + ntot) + 1000
    total = 0
    A_full = T.copy()  # flipped constraint matrix with artificials, for refactorization

    def run(d, phase_cost):
        nonlocal total, T, beta
        chunk = max(200, 2 * m)
        refreshes = 0
        while True:
            status, it = _kernel.iterate(T, beta, d, basis, state, full_upper, can_enter,
                                         ctrl, min(chunk, cap - total), bland_after, piv_tol)
            total += it
            if status == 1:
                return 1, d
            if status == 2 and total >= cap:
                raise NumericalFailure(f"simplex exceeded {cap} iterations")
            # Refactorize from the current basis.
            lu = _factor(A_full[:, basis])
            xN = np.where(state == 2, full_upper, 0.0)
            xN[basis] = 0.0
            beta = scipy.linalg.lu_solve(lu, b - A_full @ xN, check_finite=False)
            y = scipy.linalg.lu_solve(lu, phase_cost[basis], trans=1, check_finite=False)
            d = np.ascontiguousarray(phase_cost - A_full.T @ y)
            d[basis] = 0.0
            if status == 0:
                refreshes += 1
                elig = can_enter.astype(bool) & (((state == 1) & (d < -1e-9)) | ((state == 2) & (d > 1e-9)))
                if not elig.any() or refreshes > 5:
                    return 0, d
            T = np.ascontiguousarray(scipy.linalg.lu_solve(lu, A_full, check_finite=False))

    if na:
        c1 = np.zeros(ntot)
        c1[nfull:] = 1.0
        d1 = np.ascontiguousarray(c1 - c1[basis] @ T)
        status, d1 = run(d1, c1)
        infeas = float(np.sum(np.where(basis >= nfull, beta, 0.0)))
        if infeas > TOL_FEAS * (1.0 + np.max(np.abs(b), initial=0.0)):
            return LpSolution(INFEASIBLE, iterations=total)
        full_upper[nfull:] = 0.0
        can_enter[nfull:] = 0
        # Pivot zero-level artificials out where a structural column allows it.
        for r in np.flatnonzero(basis >= nfull):
            cand = np.flatnonzero((np.abs(T[r, :nfull]) > 1e-7) & (state[:nfull] != 0))
            if cand.size == 0:
                continue
            q = int(cand[np.argmax(np.abs(T[r, cand]))])
            val = full_upper[q] if state[q] == 2 else 0.0
            state[basis[r]] = 1
            prow = T[r] / T[r, q]
            T -= np.outer(T[:, q], prow)
            T[r] = prow
            T[:, q] = 0.0
            T[r, q] = 1.0
            beta[r] = val
            basis[r] = q
            state[q] = 0
        T = np.ascontiguousarray(T)
    c2 = np.zeros(ntot)
    c2[:nfull] = sf.c
    d2 = np.ascontiguousarray(c2 - c2[basis] @ T)
    status, d2 = run(d2, c2)
    if status == 1:
        return LpSolution(UNBOUNDED, iterations=total)

    xs = np.where(state == 2, full_upper, 0.0)
    xs[basis] = beta
    xs = np.clip(xs, 0.0, full_upper)[:nfull]
    if lo_s is not None:
        xs = xs + lo_s
    if m:
        y_flipped = scipy.linalg.lu_solve(_factor(A_full[:, basis]), c2[basis], trans=1, check_finite=False)
    else:
        y_flipped = np.zeros(0)
    y_min = y_flipped * flip
    x = sf.to_original(xs)
    obj_min = float(sf.c @ xs) + sf.obj_const
    red_min = sf.c_sign * p.cost - p.A.T @ y_min if m else sf.c_sign * p.cost.copy()
    s = sf.c_sign
    return LpSolution(OPTIMAL, x, s * obj_min, s * y_min, s * red_min, total)


def solve_lp(p: LpProblem, max_iter: int | None = None) -> LpSolution:
    """Solve an LP. Duals are the sensitivities of the optimal value to ``rhs``."""
    return _solve_std(StandardForm(p), max_iter=max_iter)


def solve_standard(sf: StandardForm) -> LpSolution:
    """Solve a prepared standard form (see ``StandardForm.with_cost``/``with_rhs``)."""
    return _solve_std(sf)


def solve_with_bounds(sf: StandardForm, lower: np.ndarray, upper: np.ndarray) -> LpSolution:
    """Re-solve ``sf`` with new original-space bounds on finite-lower columns."""
    p = sf.problem
    if np.any(lower > upper):
        return LpSolution(INFEASIBLE)
    n_std = sf.A.shape[1]
    lo_s = np.zeros(n_std)
    up_s = np.full(n_std, np.inf)
    pos = sf.sign > 0
    k = np.flatnonzero(pos)
    j = sf.orig[k]
    fin = np.isfinite(p.lower[j])
    k, j = k[fin], j[fin]
    lo_s[k] = lower[j] - sf.offset[j]
    up_s[k] = upper[j] - sf.offset[j]
    return _solve_std(sf, lo_s, up_s)

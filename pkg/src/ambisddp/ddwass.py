"""Best-case cost-to-go under decision-dependent Wasserstein balls on a box.

Setting: stage ``t`` solves ``min c @ x + phi(x)`` over ``A x >= omega - C x_prev``
with ``omega`` only on the right-hand side, ``omega`` supported on the box
``[lower, upper]``, and the empirical distribution of ``N`` sample points as
the ball center. The radius is affine in the incoming state,
``eps(x_prev) = base + slope @ x_prev``, and the ground norm is l1.

The best-case expectation over the ball equals
``max_{rho >= 0} -eps rho + mean_i min_{omega in box} (rho |omega - omega_i|_1 + Q(x_prev, omega))``.
Relaxing integrality of ``x`` and dualizing the inner problem yields an LP
in ``(rho, lambda_i, mu_i, nu_i, zeta_i, sigma_i)`` whose objective is affine
in ``x_prev``; any feasible point gives a valid cut, the optimal one at
``x_hat`` the strongest.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .builder import LpBuilder
from .errors import DimensionMismatch, DualInfeasible, ModelError, NegativeRadius
from .lp import solve_lp
from .mip import solve_mip
from .model import Cut


@dataclass(frozen=True)
class DdRadius:
    """``eps(x) = base + slope @ x``; must stay nonnegative on every binary ``x``."""

    base: float
    slope: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.slope, dtype=float).ravel()
        object.__setattr__(self, "slope", s)
        if self.base + np.minimum(s, 0.0).sum() < -1e-12:
            raise NegativeRadius(f"radius {self.base} + {s} is negative at some binary state")

    def __call__(self, x) -> float:
        return dd_radius_eval(self, x)


def dd_radius_eval(radius: DdRadius, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != radius.slope.size:
        raise DimensionMismatch(f"radius expects {radius.slope.size} states, got {x.size}")
    val = float(radius.base + radius.slope @ x)
    if val < -1e-12:
        raise NegativeRadius(f"radius {val} at {x}")
    return max(val, 0.0)


@dataclass(frozen=True)
class BoxSupport:
    lower: np.ndarray
    upper: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        up = np.asarray(self.upper, dtype=float).ravel()
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "points", pts)
        if lo.size != up.size or pts.shape[1] != lo.size:
            raise DimensionMismatch("box bounds and sample points disagree in dimension")
        if np.any(lo > up) or np.any(pts < lo - 1e-12) or np.any(pts > up + 1e-12):
            raise ModelError("sample points must lie inside the box")

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class DdStageData:
    """Rows ``A x >= omega - C x_prev`` (one row per component of omega), cost ``c @ x``."""

    A: np.ndarray
    C: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        c = np.asarray(self.cost, dtype=float).ravel()
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "cost", c)
        if A.shape[1] != c.size or C.shape[0] != A.shape[0]:
            raise DimensionMismatch("A, C and cost do not fit together")

    @property
    def d_x(self) -> int:
        return self.cost.size


@dataclass
class DdCutSolution:
    cut: Cut
    value: float
    rho: float
    lambdas: np.ndarray = field(repr=False)


def dd_cut_generate(stage: DdStageData, support: BoxSupport, radius: DdRadius, next_cuts,
                    x_hat, t: int = 0, box_rows: bool = True) -> DdCutSolution:
    """Strongest cut of the best-case cost-to-go at ``x_hat``.

    ``next_cuts`` is a nonempty list of ``(pi, gamma)`` describing the next
    stage's cost-to-go from below. With ``box_rows`` the relaxation keeps
    ``0 <= x <= 1``, which tightens the cut and keeps the LP feasible.
    """
    next_cuts = list(next_cuts)
    if not next_cuts:
        raise ModelError("at least one next-stage cut is required")
    x_hat = np.asarray(x_hat, dtype=float).ravel()
    A, C, c = stage.A, stage.C, stage.cost
    m, d = A.shape
    if support.points.shape[1] != m:
        raise DimensionMismatch(f"omega has {support.points.shape[1]} components, stage has {m} rows")
    if x_hat.size != C.shape[1]:
        raise DimensionMismatch("x_hat does not match C")
    Pi = np.array([np.asarray(p, dtype=float).ravel() for p, _ in next_cuts])
    gam = np.array([float(g) for _, g in next_cuts])
    K = len(next_cuts)
    N = support.size
    eps = dd_radius_eval(radius, x_hat)
    l, u = support.lower, support.upper

    bld = LpBuilder()
    rho = bld.add_vars(1, -eps, 0.0)[0]
    lam_cols = []
    for i in range(N):
        w = support.points[i]
        lam = bld.add_vars(m, (w - C @ x_hat) / N, 0.0)
        mu = bld.add_vars(m, (l - w) / N, 0.0)
        nu = bld.add_vars(m, (w - u) / N, 0.0)
        zeta = bld.add_vars(K, gam / N, 0.0)
        lam_cols.append(lam)
        cols = [lam, zeta]
        blocks = [A.T, -Pi.T]
        if box_rows:
            s0 = bld.add_vars(d, 0.0, 0.0)
            s1 = bld.add_vars(d, -1.0 / N, 0.0)
            cols += [s0, s1]
            blocks += [np.eye(d), -np.eye(d)]
        bld.add_rows(np.concatenate(cols), np.hstack(blocks), "=", c)
        # |lambda - mu + nu|_inf <= rho
        g_cols = np.concatenate([lam, mu, nu, [rho]])
        I = np.eye(m)
        bld.add_rows(g_cols, np.hstack([I, -I, I, -np.ones((m, 1))]), "<=", 0.0)
        bld.add_rows(g_cols, np.hstack([-I, I, -I, -np.ones((m, 1))]), "<=", 0.0)
        bld.add_row(zeta, np.ones(K), "=", 1.0)
    sol = solve_lp(bld.build_lp(maximize=True))
    if sol.status == "infeasible":
        raise DualInfeasible("no multipliers match the stage cost and the next-stage cuts")
    if not sol.optimal:
        raise ModelError(f"cut LP {sol.status}")
    rho_v = float(sol.primal[rho])
    lams = np.array([sol.primal[cols] for cols in lam_cols])
    grad = -rho_v * radius.slope - C.T @ lams.sum(axis=0) / N
    beta = sol.objective - grad @ x_hat
    return DdCutSolution(Cut(t, grad, beta, "dd_wasserstein"), sol.objective, rho_v, lams)


def run_dd(stages, supports, radii, x0, iterations: int = 20, seed: int = 0, lower: float = 0.0):
    """Cutting-plane loop for the decision-dependent best-case problem.

    ``stages[t]``/``supports[t]``/``radii[t]`` describe stage ``t``; stage 0
    uses the first sample point of ``supports[0]`` as its fixed data.
    Forward passes draw sample points uniformly; each backward stage
    generates one cut at the visited state. Returns ``(cuts per stage,
    lower bounds per iteration)`` where ``cuts[t]`` approximates the
    cost-to-go of stage ``t+1``.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    T = len(stages)
    cuts = [[(np.zeros(stages[t].d_x), lower)] for t in range(T - 1)] + [[]]
    bounds = []

    def solve_stage(t, x_prev, w):
        st = stages[t]
        bld = LpBuilder()
        x = bld.add_vars(st.d_x, st.cost, 0.0, 1.0, integer=True)
        bld.add_rows(x, st.A, ">=", w - st.C @ x_prev)
        if t < T - 1:
            phi = bld.add_vars(1, 1.0, -np.inf)[0]
            for pi, g in cuts[t]:
                bld.add_row(np.concatenate([[phi], x]), np.concatenate([[1.0], -pi]), ">=", g)
        sol = solve_mip(bld.build_mip(), 1e-9)
        return np.round(sol.primal[x]), sol.incumbent_bound

    for _ in range(iterations):
        xs = []
        x_prev = np.asarray(x0, dtype=float)
        for t in range(T):
            pts = supports[t].points
            w = pts[0] if t == 0 else pts[rng.integers(pts.shape[0])]
            x_prev, _ = solve_stage(t, x_prev, w)
            xs.append(x_prev)
        for t in range(T - 1, 0, -1):
            nxt = cuts[t] if t < T - 1 else [(np.zeros(stages[t].d_x), 0.0)]
            res = dd_cut_generate(stages[t], supports[t], radii[t], nxt, xs[t - 1], t)
            cuts[t - 1].append((res.cut.alpha, res.cut.beta))
        bounds.append(solve_stage(0, np.asarray(x0, dtype=float), supports[0].points[0])[1])
    return cuts, bounds

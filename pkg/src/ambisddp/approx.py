"""Cuts on stage value functions and the cost-to-go approximations built from them.

Three approximations of the next stage's (best-case, worst-case or expected)
cost-to-go are provided, each able to append itself to a subproblem:

``EpigraphApprox``
    ``phi >= alpha @ x + beta`` for a list of aggregated cuts.
``McCormickApprox``
    best-case expectation of per-scenario cut models, with the products of
    probabilities and binary states linearized exactly.
``WassersteinDualApprox``
    worst-case expectation of per-scenario cut models through the dual of
    the transport LP.
"""
from __future__ import annotations

import numpy as np

from .ambiguity import best_case_distribution, wasserstein_polytope, worst_case_distribution
from .builder import LpBuilder
from .errors import BadBound, ModelError
from .lp import LpSolution, solve_lp
from .mip import TOL_MIP, lp_relaxation, solve_mip
from .model import Cut, MultistageModel, ScenarioSupport, Subproblem, build_subproblem

CUTTING_PLANE = "cutting_plane"
REFORMULATION = "reformulation"


# ---------------------------------------------------------------------------
# single-scenario cuts


def benders_cut(sol: LpSolution, sub: Subproblem, stage: int = 0, scenario=None,
                iteration: int = 0) -> Cut:
    """Cut from an optimal LP relaxation of ``sub``.

    The incoming state enters the right-hand side as ``b - C x_prev``, so the
    slope is ``-C^T y`` with ``y`` the duals of the stage rows.
    """
    y = sol.duals[sub.link_rows]
    alpha = -sub.C.T @ y
    return Cut(stage, alpha, sol.objective - alpha @ sub.x_prev, "benders", scenario, iteration)


def integer_optimality_cut(q_hat: float, x_hat, L: float, stage: int = 0, scenario=None,
                           iteration: int = 0, tol: float = 1e-9) -> Cut:
    """``Q(x) >= (q_hat - L) * (sum_i (2 x_hat_i - 1) x_i - sum_i x_hat_i) + q_hat``.

    Exact at ``x_hat`` and at most ``L`` at every other binary point.
    """
    if L > q_hat + tol * (1.0 + abs(q_hat)):
        raise BadBound(f"lower bound {L} exceeds the value {q_hat}")
    x_hat = np.asarray(x_hat, dtype=float).ravel()
    gap = max(q_hat - L, 0.0)
    alpha = gap * (2.0 * x_hat - 1.0)
    beta = q_hat - gap * x_hat.sum()
    return Cut(stage, alpha, beta, "integer_optimality", scenario, iteration)


def strengthened_benders_cut(model: MultistageModel, t: int, x_prev, scenario, approx=None,
                             tol_mip: float = TOL_MIP, iteration: int = 0):
    """Benders slope with the intercept lifted by the Lagrangian of the copy constraint.

    The intercept is the proven lower bound of
    ``min f + phi - alpha @ z`` over the stage MIP with ``z`` a continuous
    copy of the incoming state. Returns ``(cut, lp_solution)``.
    """
    sub = build_subproblem(model, t, x_prev, scenario, approx)
    sol = solve_lp(lp_relaxation(sub.mip))
    if not sol.optimal:
        raise ModelError(f"stage {t} relaxation is {sol.status} at state {np.asarray(x_prev)}")
    base = benders_cut(sol, sub, t, scenario if isinstance(scenario, (int, np.integer)) else None, iteration)
    lag = build_subproblem(model, t, x_prev, scenario, approx, copy_alpha=base.alpha)
    beta = solve_mip(lag.mip, tol_mip).incumbent_bound
    beta = max(beta, base.beta)
    cut = Cut(t, base.alpha, beta, "strengthened_benders", base.scenario, iteration)
    return cut, sol


def expected_cut(cuts, probs, stage: int = 0, iteration: int = 0) -> Cut:
    alphas = np.array([c.alpha for c in cuts])
    betas = np.array([c.beta for c in cuts])
    return Cut(stage, probs @ alphas, float(probs @ betas), "expected", None, iteration)


def dro_separation_cut(cuts, x_hat, support: ScenarioSupport, epsilon: float,
                       stage: int = 0, iteration: int = 0):
    """Weight per-scenario cuts by the worst-case distribution of their values at ``x_hat``.

    Returns ``(cut, p_hat)``.
    """
    alphas = np.array([c.alpha for c in cuts])
    betas = np.array([c.beta for c in cuts])
    x_hat = np.asarray(x_hat, dtype=float)
    p_hat, _ = worst_case_distribution(alphas @ x_hat + betas, support, epsilon)
    return Cut(stage, p_hat @ alphas, float(p_hat @ betas), "dro_aggregate", None, iteration), p_hat


# ---------------------------------------------------------------------------
# constraint fragments


def drr_mccormick_rows(bld: LpBuilder, x_cols, scenario_cuts, support: ScenarioSupport,
                       epsilon: float):
    """Append the linearized best-case expectation; returns the column holding its value.

    ``scenario_cuts[i]`` is a list of ``(alpha, beta)`` pairs for scenario
    ``i``. With ``eta_i`` standing for ``p_i x`` the rows are
    ``theta_i >= alpha @ eta_i + beta p_i`` together with the McCormick
    envelope of ``eta_i`` and the transport description of ``p``.
    """
    N = support.size
    d = len(x_cols)
    _, p, _ = wasserstein_polytope(support, epsilon, bld)
    theta = bld.add_vars(N, 0.0, -np.inf, np.inf)
    eta = bld.add_vars(N * d, 0.0, 0.0, 1.0).reshape(N, d)
    for i in range(N):
        for j in range(d):
            bld.add_row([eta[i, j], x_cols[j]], [1.0, -1.0], "<=", 0.0)
            bld.add_row([eta[i, j], p[i]], [1.0, -1.0], "<=", 0.0)
            bld.add_row([eta[i, j], p[i], x_cols[j]], [1.0, -1.0, -1.0], ">=", -1.0)
        for alpha, beta in scenario_cuts[i]:
            cols = np.concatenate([[theta[i]], eta[i], [p[i]]])
            bld.add_row(cols, np.concatenate([[1.0], -np.asarray(alpha), [-beta]]), ">=", 0.0)
    phi = bld.add_vars(1, 1.0, -np.inf, np.inf)[0]
    bld.add_row(np.concatenate([[phi], theta]), np.concatenate([[1.0], -np.ones(N)]), "=", 0.0)
    return phi


def dro_dual_rows(bld: LpBuilder, x_cols, scenario_cuts, support: ScenarioSupport,
                  epsilon: float):
    """Append the dual form of the worst-case expectation; returns its value column.

    ``phi = eps * rho + sum_i pbar_i nu_i`` with
    ``nu_i + D[i, j] rho >= alpha @ x + beta`` for every cut of scenario ``j``.
    """
    N = support.size
    D = support.distances
    rho = bld.add_vars(1, 0.0, 0.0, np.inf)[0]
    nu = bld.add_vars(N, 0.0, -np.inf, np.inf)
    for j in range(N):
        for alpha, beta in scenario_cuts[j]:
            alpha = np.asarray(alpha, dtype=float)
            for i in range(N):
                cols = np.concatenate([[nu[i], rho], x_cols])
                bld.add_row(cols, np.concatenate([[1.0, D[i, j]], -alpha]), ">=", beta)
    phi = bld.add_vars(1, 1.0, -np.inf, np.inf)[0]
    bld.add_row(np.concatenate([[phi, rho], nu]),
                np.concatenate([[1.0, -epsilon], -support.probs]), "=", 0.0)
    return phi


# ---------------------------------------------------------------------------
# approximations


def _known(cuts, cut, tol=1e-12) -> bool:
    for c in cuts:
        if abs(c.beta - cut.beta) <= tol * (1.0 + abs(cut.beta)) and np.allclose(c.alpha, cut.alpha, rtol=0, atol=tol):
            return True
    return False


class EpigraphApprox:
    """``phi >= max_k alpha_k @ x + beta_k`` with ``phi >= lower``."""

    mode = CUTTING_PLANE

    def __init__(self, d_x: int, lower: float):
        self.d_x = d_x
        self.lower = float(lower)
        self.cuts: list[Cut] = []

    def add_cut(self, cut: Cut) -> bool:
        """Append ``cut`` unless an identical one is present; returns whether it was added."""
        if cut.alpha.size != self.d_x:
            raise ModelError(f"cut has {cut.alpha.size} coefficients, state has {self.d_x}")
        if _known(self.cuts, cut):
            return False
        self.cuts.append(cut)
        return True

    @property
    def num_cuts(self) -> int:
        return len(self.cuts)

    def add_to(self, bld: LpBuilder, x_cols) -> int:
        phi = bld.add_vars(1, 1.0, self.lower, np.inf)[0]
        for c in self.cuts:
            bld.add_row(np.concatenate([[phi], x_cols]), np.concatenate([[1.0], -c.alpha]), ">=", c.beta)
        return phi

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return max([self.lower] + [c.value(x) for c in self.cuts])


class _ScenarioApprox:
    """Per-scenario cut lists for the next stage; the constant cut ``lower`` is always present."""

    mode = REFORMULATION

    def __init__(self, d_x: int, lower: float, support: ScenarioSupport, epsilon: float):
        self.d_x = d_x
        self.lower = float(lower)
        self.support = support
        self.epsilon = float(epsilon)
        self.cuts: list[list[Cut]] = [[] for _ in range(support.size)]

    def add_cut(self, cut: Cut) -> bool:
        if cut.scenario is None:
            raise ModelError("scenario cut required")
        if cut.alpha.size != self.d_x:
            raise ModelError(f"cut has {cut.alpha.size} coefficients, state has {self.d_x}")
        if _known(self.cuts[cut.scenario], cut):
            return False
        self.cuts[cut.scenario].append(cut)
        return True

    @property
    def num_cuts(self) -> int:
        return sum(len(c) for c in self.cuts)

    def _pairs(self):
        zero = np.zeros(self.d_x)
        return [[(zero, self.lower)] + [(c.alpha, c.beta) for c in lst] for lst in self.cuts]

    def scenario_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([max([self.lower] + [c.value(x) for c in lst]) for lst in self.cuts])


class McCormickApprox(_ScenarioApprox):
    """Best-case expectation over the ball of the per-scenario cut models."""

    def add_to(self, bld, x_cols) -> int:
        return drr_mccormick_rows(bld, x_cols, self._pairs(), self.support, self.epsilon)

    def evaluate(self, x) -> float:
        return best_case_distribution(self.scenario_values(x), self.support, self.epsilon)[1]


class WassersteinDualApprox(_ScenarioApprox):
    """Worst-case expectation over the ball of the per-scenario cut models."""

    def add_to(self, bld, x_cols) -> int:
        return dro_dual_rows(bld, x_cols, self._pairs(), self.support, self.epsilon)

    def evaluate(self, x) -> float:
        return worst_case_distribution(self.scenario_values(x), self.support, self.epsilon)[1]


def fragment_value(approx, x) -> float:
    """Optimal value of ``phi`` in ``approx``'s fragment with the state fixed at ``x``."""
    x = np.asarray(x, dtype=float)
    bld = LpBuilder()
    xc = bld.add_vars(x.size, 0.0, x, x)
    approx.add_to(bld, xc)
    sol = solve_lp(bld.build_lp())
    if not sol.optimal:
        raise ModelError(f"fragment LP {sol.status}")
    return sol.objective

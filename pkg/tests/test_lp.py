import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from ambisddp import _kernel
from ambisddp.errors import DimensionMismatch, ModelError
from ambisddp.lp import LpProblem, StandardForm, dual_objective, solve_lp, solve_with_bounds


def _highs(p):
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row, rel, b in zip(p.A, p.relations, p.rhs):
        if rel == "<=":
            A_ub.append(row); b_ub.append(b)
        elif rel == ">=":
            A_ub.append(-row); b_ub.append(-b)
        else:
            A_eq.append(row); b_eq.append(b)
    c = -p.cost if p.maximize else p.cost
    res = linprog(c, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(A_eq) if A_eq else None, b_eq=b_eq or None,
                  bounds=list(zip(p.lower, np.where(np.isinf(p.upper), None, p.upper))), method="highs")
    return res


def test_textbook_max():
    # max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18
    p = LpProblem([3, 5], [[1, 0], [0, 2], [3, 2]], ["<="] * 3, [4, 12, 18], maximize=True)
    sol = solve_lp(p)
    assert sol.optimal
    assert sol.objective == pytest.approx(36.0)
    assert np.allclose(sol.primal, [2, 6])
    assert np.allclose(sol.duals, [0, 1.5, 1])


def test_duals_are_rhs_sensitivities():
    p = LpProblem([1, 2, 0.5], [[1, 1, 1], [1, -1, 0], [0, 1, 2]], [">=", "<=", ">="], [3, 1, 2])
    base = solve_lp(p)
    h = 1e-6
    for k in range(3):
        rhs = p.rhs.copy()
        rhs[k] += h
        bumped = solve_lp(LpProblem(p.cost, p.A, p.relations, rhs))
        assert (bumped.objective - base.objective) / h == pytest.approx(base.duals[k], abs=1e-5)


def test_infeasible_and_unbounded():
    assert solve_lp(LpProblem([1, 1], [[1, 1]], ["<="], [-1])).status == "infeasible"
    assert solve_lp(LpProblem([-1, 0], [[0, 1]], ["<="], [1])).status == "unbounded"


def test_crossed_bounds_are_infeasible():
    p = LpProblem([1.0], np.zeros((0, 1)), [], [], lower=[2.0], upper=[1.0])
    assert solve_lp(p).status == "infeasible"


def test_free_and_negative_columns():
    # min x + y with x free, y <= -1, x - y >= 0.5
    p = LpProblem([1, 1], [[1, -1]], [">="], [0.5], lower=[-np.inf, -np.inf], upper=[np.inf, -1])
    sol = solve_lp(p)
    assert sol.status == "unbounded"
    p = LpProblem([1, -1], [[1, -1]], [">="], [0.5], lower=[-np.inf, -5], upper=[np.inf, -1])
    sol = solve_lp(p)
    assert sol.objective == pytest.approx(0.5)


def test_shape_checks():
    with pytest.raises(DimensionMismatch):
        LpProblem([1, 2], [[1, 2]], ["<=", "<="], [1])
    with pytest.raises(ModelError):
        LpProblem([1], [[1]], ["<>"], [1])


def test_solve_with_bounds_matches_tightened_problem():
    p = LpProblem([-1, -2], [[1, 1]], ["<="], [3], upper=[2, 2])
    sf = StandardForm(p)
    tight = solve_with_bounds(sf, np.array([0.0, 0.0]), np.array([2.0, 1.0]))
    ref = solve_lp(LpProblem([-1, -2], [[1, 1]], ["<="], [3], upper=[2, 1]))
    assert tight.objective == pytest.approx(ref.objective)


def _random_lp(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.integers(-4, 5, (m, n)).astype(float)
    x0 = rng.uniform(0, 2, n)
    rel = rng.choice(["<=", ">=", "="], m, p=[0.45, 0.45, 0.1])
    slack = rng.uniform(0, 1, m)
    rhs = A @ x0 + np.where(rel == "<=", slack, np.where(rel == ">=", -slack, 0.0))
    upper = np.where(rng.random(n) < 0.5, rng.uniform(2, 4, n), np.inf)
    cost = rng.integers(-3, 6, n).astype(float)
    return LpProblem(cost, A, rel, rhs, np.zeros(n), upper, maximize=bool(rng.random() < 0.3))


@given(st.integers(0, 10_000), st.integers(1, 7), st.integers(1, 7))
def test_matches_highs_on_random_feasible_lps(seed, m, n):
    p = _random_lp(seed, m, n)
    ours = solve_lp(p)
    ref = _highs(p)
    if ref.status == 3:
        assert ours.status == "unbounded"
        return
    assert ref.status == 0 and ours.optimal
    sign = -1.0 if p.maximize else 1.0
    assert ours.objective == pytest.approx(sign * ref.fun, abs=1e-7 * (1 + abs(ref.fun)))
    # the dual route must certify the same value
    assert dual_objective(p, ours) == pytest.approx(ours.objective, abs=1e-6 * (1 + abs(ours.objective)))


@given(st.integers(0, 10_000))
def test_python_and_compiled_kernels_agree(seed):
    if _kernel.compiled_iterate is None:
        pytest.skip("compiled kernel not built")
    p = _random_lp(seed, 6, 8)
    orig = _kernel.iterate
    try:
        _kernel.iterate = _kernel.python_iterate
        a = solve_lp(p)
        _kernel.iterate = _kernel.compiled_iterate
        b = solve_lp(p)
    finally:
        _kernel.iterate = orig
    assert a.status == b.status
    if a.optimal:
        assert a.objective == b.objective
        assert np.array_equal(a.primal, b.primal)
        assert a.iterations == b.iterations


def test_degenerate_problem_terminates():
    # many ties in the ratio test
    n = 6
    A = np.vstack([np.eye(n), np.ones((1, n)), np.ones((1, n))])
    p = LpProblem(-np.ones(n), A, ["<="] * (n + 2), np.concatenate([np.zeros(n), [0.0, 0.0]]))
    sol = solve_lp(p)
    assert sol.optimal and sol.objective == pytest.approx(0.0)

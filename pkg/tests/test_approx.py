import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ambisddp.ambiguity import best_case_distribution, worst_case_distribution
from ambisddp.approx import (EpigraphApprox, McCormickApprox, WassersteinDualApprox, benders_cut,
                             dro_separation_cut, expected_cut, fragment_value,
                             integer_optimality_cut, strengthened_benders_cut)
from ambisddp.instances import random_instance
from ambisddp.lp import solve_lp
from ambisddp.mip import lp_relaxation, solve_mip
from ambisddp.model import Cut, ScenarioSupport, build_subproblem


def _tuple(seed, d, N):
    rng = np.random.default_rng(seed)
    sup = ScenarioSupport(np.round(rng.uniform(0, 2, (N, 1)), 1), rng.dirichlet(np.ones(N)))
    eps = float(rng.choice([0.0, 0.1, 0.5, 2.0]))
    cuts = [[Cut(1, rng.normal(size=d), rng.normal(), scenario=i) for _ in range(rng.integers(1, 4))]
            for i in range(N)]
    return sup, eps, cuts


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 4))
def test_linearized_fragments_match_direct_lps(seed, d, N):
    sup, eps, cuts = _tuple(seed, d, N)
    for cls, inner in ((McCormickApprox, best_case_distribution), (WassersteinDualApprox, worst_case_distribution)):
        approx = cls(d, -50.0, sup, eps)
        for i, lst in enumerate(cuts):
            for c in lst:
                approx.add_cut(c)
        for bits in itertools.product((0.0, 1.0), repeat=d):
            x = np.array(bits)
            vals = np.array([max([-50.0] + [c.value(x) for c in lst]) for lst in cuts])
            assert fragment_value(approx, x) == pytest.approx(inner(vals, sup, eps)[1], abs=1e-7)


@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 4))
def test_dro_separation_cut_is_valid_and_tight(seed, d, N):
    sup, eps, cuts = _tuple(seed, d, N)
    per = [lst[0] for lst in cuts]
    rng = np.random.default_rng(seed + 1)
    x_hat = rng.integers(0, 2, d).astype(float)
    cut, p_hat = dro_separation_cut(per, x_hat, sup, eps)
    alphas = np.array([c.alpha for c in per])
    betas = np.array([c.beta for c in per])
    for bits in itertools.product((0.0, 1.0), repeat=d):
        x = np.array(bits)
        assert cut.value(x) <= worst_case_distribution(alphas @ x + betas, sup, eps)[1] + 1e-7
    assert cut.value(x_hat) == pytest.approx(worst_case_distribution(alphas @ x_hat + betas, sup, eps)[1], abs=1e-7)


def test_expected_cut_weights():
    cuts = [Cut(1, [1.0, 0.0], 2.0), Cut(1, [0.0, 3.0], -1.0)]
    c = expected_cut(cuts, np.array([0.25, 0.75]))
    assert np.allclose(c.alpha, [0.25, 2.25]) and c.beta == pytest.approx(-0.25)


def test_integer_optimality_cut_shape():
    x_hat = np.array([1.0, 0.0, 1.0])
    c = integer_optimality_cut(10.0, x_hat, 2.0)
    assert c.value(x_hat) == pytest.approx(10.0)
    for bits in itertools.product((0.0, 1.0), repeat=3):
        x = np.array(bits)
        if not np.array_equal(x, x_hat):
            assert c.value(x) <= 2.0 + 1e-12


def test_cut_family_ordering_on_a_stage():
    # Benders <= strengthened Benders <= value at every binary state
    model = random_instance(11, 2, 2, 3)
    x_hat = np.array([1.0, 0.0, 1.0])
    sub = build_subproblem(model, 1, x_hat, 0)
    lp = solve_lp(lp_relaxation(sub.mip))
    b = benders_cut(lp, sub, 1, 0)
    s, _ = strengthened_benders_cut(model, 1, x_hat, 0, tol_mip=1e-9)
    for bits in itertools.product((0.0, 1.0), repeat=3):
        x = np.array(bits)
        q = solve_mip(build_subproblem(model, 1, x, 0).mip, 1e-9).objective
        assert b.value(x) <= s.value(x) + 1e-7 <= q + 2e-7


def test_epigraph_dedups_cuts():
    e = EpigraphApprox(2, 0.0)
    assert e.add_cut(Cut(0, [1.0, 2.0], 3.0))
    assert not e.add_cut(Cut(0, [1.0, 2.0], 3.0))
    assert e.num_cuts == 1
    assert e.evaluate([1.0, 1.0]) == pytest.approx(6.0)
    assert e.evaluate([-5.0, -5.0]) == pytest.approx(0.0)

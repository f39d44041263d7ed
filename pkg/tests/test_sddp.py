import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ambisddp.dp import exact_value_dp
from ambisddp.errors import ModelError
from ambisddp.instances import random_instance
from ambisddp.sddp import (CONVERGED, ITER_LIMIT, TIME_LIMIT, SolverConfig, evaluate_policy_path,
                           normalize_variant, run, sample_path, stage_lower_bounds, variant_risk)

VARIANTS = ("drr_c", "drr_r", "dro_c", "dro_r", "neutral")


@pytest.mark.parametrize("variant", VARIANTS)
def test_small_instance_matches_exact_value(variant):
    model = random_instance(21, 3, 2, 2)
    eps = 0.0 if variant == "neutral" else 0.5
    _, log = run(model, eps, SolverConfig(variant=variant, stall_iters=30, tol_mip=1e-9))
    assert log.status == CONVERGED
    assert log.lower_bound == pytest.approx(exact_value_dp(model, eps, variant_risk(variant)), abs=1e-6)


@settings(max_examples=6)
@given(st.integers(0, 500), st.sampled_from(VARIANTS), st.sampled_from([0.0, 0.2, 1.0]))
def test_every_recorded_bound_is_valid_and_nondecreasing(seed, variant, eps):
    model = random_instance(seed, 2, 2, 3)
    exact = exact_value_dp(model, eps, variant_risk(variant))
    _, log = run(model, eps, SolverConfig(variant=variant, stall_iters=10, max_iters=60, tol_mip=1e-9))
    lbs = np.array([r.lb for r in log.records])
    assert np.all(np.diff(lbs) >= 0)
    assert np.all(lbs <= exact + 1e-7)


def test_neutral_equals_drr_at_zero_radius():
    model = random_instance(5, 3, 3, 2)
    _, a = run(model, 0.0, SolverConfig(variant="neutral", stall_iters=20))
    _, b = run(model, 0.0, SolverConfig(variant="drr_c", stall_iters=20))
    assert a.lower_bound == pytest.approx(b.lower_bound, abs=1e-9)


def test_identical_runs_give_identical_csv():
    model = random_instance(8, 3, 2, 3)
    cfg = SolverConfig(variant="dro_c", seed=4, stall_iters=15)
    _, a = run(model, 0.2, cfg)
    _, b = run(model, 0.2, cfg)
    assert a.to_csv() == b.to_csv()


def test_threads_do_not_change_the_bound():
    model = random_instance(8, 3, 3, 3)
    _, a = run(model, 0.2, SolverConfig(variant="drr_c", seed=1, stall_iters=15, threads=1))
    _, b = run(model, 0.2, SolverConfig(variant="drr_c", seed=1, stall_iters=15, threads=3))
    assert a.to_csv() == b.to_csv()


def test_limits_are_reported():
    model = random_instance(8, 3, 2, 3)
    _, log = run(model, 0.0, SolverConfig(max_iters=3))
    assert log.status == ITER_LIMIT and len(log.records) == 3
    _, log = run(model, 0.0, SolverConfig(time_limit=0.0))
    assert log.status == TIME_LIMIT and len(log.records) == 1


def test_callback_sees_every_iteration():
    seen = []
    model = random_instance(8, 2, 2, 2)
    _, log = run(model, 0.0, SolverConfig(max_iters=5), on_iteration=seen.append)
    assert [r.iteration for r in seen] == [1, 2, 3, 4, 5]


def test_stage_lower_bounds_are_below_every_state_value():
    model = random_instance(12, 3, 2, 2)
    L = stage_lower_bounds(model)
    from ambisddp.dp import value_functions

    Q, _ = value_functions(model)
    for t in range(1, 3):
        assert L[t] <= Q[t].min()


def test_policy_evaluation_sums_stage_costs():
    model = random_instance(8, 3, 2, 2)
    pol, _ = run(model, 0.0, SolverConfig(stall_iters=20, tol_mip=1e-9))
    rng = np.random.default_rng(0)
    vals = [evaluate_policy_path(pol, sample_path(rng, model)) for _ in range(200)]
    # the converged neutral policy is optimal, so its mean cost is near the exact value
    assert np.mean(vals) == pytest.approx(exact_value_dp(model), rel=0.1)


def test_variant_names():
    assert normalize_variant("DRR-C") == "drr_c"
    with pytest.raises(ModelError):
        normalize_variant("robust")
    with pytest.raises(ModelError):
        SolverConfig(stall_iters=0)

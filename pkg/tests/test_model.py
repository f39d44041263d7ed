import numpy as np
import pytest
from hypothesis import given, strategies as st

from ambisddp.builder import LpBuilder
from ambisddp.dp import exact_value_dp
from ambisddp.errors import DimensionMismatch, ModelError, UnboundedInteger
from ambisddp.instances import random_instance
from ambisddp.model import (MultistageModel, ScenarioSupport, StageTemplate, binary_expand,
                            build_subproblem, decode_state, encode_state)
from ambisddp.mip import solve_mip


def _integer_model(U=5):
    # one integer stock column in [0, U]; stage 1 pays 3 per unit short of demand
    st0 = StageTemplate(1, [1.0], np.zeros(0), [[1.0]], np.zeros((1, 0)), [[0.0]], [0.0], [">="],
                        x_upper=[U])
    demand = np.array([[2.0], [4.0]])
    st1 = StageTemplate(2, [0.0], [3.0], [[1.0], [0.0]], [[0.0], [1.0]], [[0.0], [1.0]],
                        np.column_stack([np.zeros(2), demand[:, 0]]), [">=", ">="], x_upper=[U])
    return MultistageModel([st0, st1], [ScenarioSupport.singleton(), ScenarioSupport(demand, [0.5, 0.5])],
                           [0.0])


def test_scenario_support_validation():
    with pytest.raises(ModelError):
        ScenarioSupport([[0.0], [1.0]], [0.7, 0.7])
    with pytest.raises(ModelError):
        ScenarioSupport([[0.0], [1.0]], [1.2, -0.2])
    s = ScenarioSupport([[0.0, 0.0], [3.0, 4.0]], [0.5, 0.5])
    assert s.distances[0, 1] == pytest.approx(7.0)


def test_stage_dimension_mismatch():
    st0 = StageTemplate(1, [1.0, 1.0], np.zeros(0), [[1.0, 1.0]], np.zeros((1, 0)), np.zeros((1, 3)),
                        [1.0], [">="])
    with pytest.raises(DimensionMismatch):
        MultistageModel([st0], [ScenarioSupport.singleton()], np.zeros(2))


def test_first_stage_must_be_deterministic():
    st0 = StageTemplate(2, [1.0], np.zeros(0), [[1.0]], np.zeros((1, 0)), [[0.0]], [0.0], [">="])
    with pytest.raises(ModelError):
        MultistageModel([st0], [ScenarioSupport([[0.0], [1.0]], [0.5, 0.5])], [0.0])


def test_binary_expansion_preserves_value():
    model = _integer_model(5)
    expanded = binary_expand(model)
    assert expanded.is_binary
    assert expanded.stages[0].d_x == 3
    # buy 4 units at cost 4 and nothing is short in either realization
    assert exact_value_dp(expanded) == pytest.approx(4.0)


@given(st.integers(0, 31), st.integers(1, 31))
def test_encode_decode_roundtrip(v, U):
    v = min(v, U)
    model = binary_expand(_integer_model(U))
    bits = encode_state(model, 0, [v])
    assert set(np.unique(bits)) <= {0.0, 1.0}
    assert decode_state(model, 0, bits)[0] == v


def test_binary_expansion_caps_the_encoded_value():
    expanded = binary_expand(_integer_model(5))
    sub = build_subproblem(expanded, 0, expanded.x0, 0)
    p = sub.mip
    p.base.cost[:] = 0.0
    p.base.cost[sub.x_cols] = -decode_state(expanded, 0, np.eye(3)).ravel()
    sol = solve_mip(p, 1e-9)
    assert -sol.objective == pytest.approx(5.0)


def test_unbounded_integer_rejected():
    model = _integer_model(5)
    with pytest.raises(UnboundedInteger):
        binary_expand(model, [[np.inf], [5]])


def test_subproblem_stage_objective_excludes_cost_to_go():
    model = random_instance(4, 2, 2, 3)
    sub = build_subproblem(model, 1, np.ones(3), 0)
    sol = solve_mip(sub.mip, 1e-9)
    assert sub.stage_objective(sol.primal) == pytest.approx(sol.objective)


def test_builder_set_rhs_and_cost():
    bld = LpBuilder()
    x = bld.add_vars(2, [1.0, 2.0], 0.0, 5.0)
    r = bld.add_row(x, [1, 1], ">=", 1.0)
    bld.set_rhs(r, 3.0)
    bld.set_cost(x[1], 0.5)
    p = bld.build_lp()
    assert p.rhs[0] == 3.0 and p.cost[1] == 0.5

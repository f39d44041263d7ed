import numpy as np
import pytest

from ambisddp.dp import (MAX_DX, binary_states, exact_value_dp, optimal_first_state, state_index,
                         value_functions)
from ambisddp.errors import TooLarge
from ambisddp.instances import battery, random_instance
from ambisddp.model import MultistageModel, ScenarioSupport, StageTemplate


def _newsvendor():
    # stage 0: open capacity x at unit cost 1; stage 1: demand 0 or 2, shortfall costs 3 per unit,
    # each capacity unit covers one unit of demand
    st0 = StageTemplate(1, [1.0, 1.0], np.zeros(0), np.zeros((1, 2)), np.zeros((1, 0)), np.zeros((1, 0)),
                        [0.0], [">="])
    st1 = StageTemplate(2, [0.0, 0.0], [3.0], np.zeros((1, 2)), [[1.0]], [[1.0, 1.0]],
                        [[0.0], [2.0]], [">="])
    return MultistageModel([st0, st1], [ScenarioSupport.singleton(), ScenarioSupport([[0.0], [2.0]], [0.5, 0.5])],
                           np.zeros(0))


def test_hand_solved_newsvendor():
    m = _newsvendor()
    # neutral: 2 units cost 2 vs 0 units cost 3 expected; 1 unit costs 1 + 1.5
    assert exact_value_dp(m) == pytest.approx(2.0)
    assert np.array_equal(optimal_first_state(m), [1.0, 1.0])
    # best case at a huge radius: demand 0 for sure, so buy nothing
    assert exact_value_dp(m, 100.0, "drr") == pytest.approx(0.0)
    # worst case: demand 2 for sure, buy both
    assert exact_value_dp(m, 100.0, "dro") == pytest.approx(2.0)
    # radius 0.5 moves a quarter of mass: drr weights (0.75, 0.25), so 0 units cost 1.5
    assert exact_value_dp(m, 0.5, "drr") == pytest.approx(1.5)


def test_state_indexing():
    S = binary_states(3)
    assert S.shape == (8, 3)
    for k, x in enumerate(S):
        assert state_index(x) == k


def test_risk_ordering_on_battery_instance():
    m, eps = battery()[1]
    lo = exact_value_dp(m, eps, "drr")
    mid = exact_value_dp(m, eps, "neutral")
    hi = exact_value_dp(m, eps, "dro")
    assert lo <= mid + 1e-9 <= hi + 2e-9


def test_value_functions_shapes():
    m = random_instance(2, 3, 2, 2)
    Q, EQ = value_functions(m)
    assert Q[0].shape == (1, 1)
    assert Q[1].shape == (4, 2)
    assert EQ[-1].shape == (4,) and not EQ[-1].any()


def test_too_large():
    with pytest.raises(TooLarge):
        exact_value_dp(random_instance(0, 2, 2, MAX_DX + 1))
    with pytest.raises(TooLarge):
        exact_value_dp(random_instance(0, 2, 7, 2))

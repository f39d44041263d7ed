import json

import numpy as np
import pytest

from ambisddp.ambiguity import AmbiguitySpec
from ambisddp.errors import ModelError
from ambisddp.instances import random_instance
from ambisddp.io import dumps_model, load_model, load_policy, model_from_dict, save_model, save_policy
from ambisddp.sddp import SolverConfig, run


def test_instance_roundtrip_is_exact(tmp_path):
    model = random_instance(7, 3, 3, 3, emergency=True)
    amb = AmbiguitySpec("wasserstein_finite", 0.2)
    path = tmp_path / "inst.json"
    save_model(path, model, amb)
    again, amb2 = load_model(path)
    assert amb2 == amb
    assert dumps_model(again, amb2) == path.read_text()
    for a, b in zip(model.stages, again.stages):
        assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)
        assert np.array_equal(a.y_upper, b.y_upper) and np.array_equal(a.y_binary, b.y_binary)


def test_missing_field_is_named(tmp_path):
    doc = json.loads(dumps_model(random_instance(1, 2, 2, 2)))
    del doc["stages"][1]["b"]
    with pytest.raises(ModelError, match=r"stages\[1\]\.b"):
        model_from_dict(doc)


def test_bad_shape_is_named():
    doc = json.loads(dumps_model(random_instance(1, 2, 2, 2)))
    doc["stages"][0]["A"] = [[[1.0]]]
    with pytest.raises(ModelError, match=r"stages\[0\]\.A"):
        model_from_dict(doc)


def test_bad_probabilities_are_named():
    doc = json.loads(dumps_model(random_instance(1, 2, 2, 2)))
    doc["supports"][1]["reference_probs"] = [0.9, 0.9]
    with pytest.raises(ModelError, match=r"supports\[1\]"):
        model_from_dict(doc)


def test_negative_epsilon_rejected():
    doc = json.loads(dumps_model(random_instance(1, 2, 2, 2)))
    doc["ambiguity"] = {"kind": "wasserstein_finite", "epsilon": -1.0}
    with pytest.raises(ModelError, match="ambiguity"):
        model_from_dict(doc)


def test_not_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{oops")
    with pytest.raises(ModelError):
        load_model(p)


def test_policy_roundtrip(tmp_path):
    model = random_instance(3, 3, 2, 2)
    for variant in ("drr_r", "dro_c"):
        pol, _ = run(model, 0.2, SolverConfig(variant=variant, stall_iters=10, max_iters=40))
        save_policy(tmp_path / "p.json", pol)
        again = load_policy(tmp_path / "p.json", model)
        _, a = pol.solve_stage(0, model.x0, 0)
        _, b = again.solve_stage(0, model.x0, 0)
        assert a.objective == pytest.approx(b.objective, abs=1e-12)

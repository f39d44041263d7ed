import json

import pytest

from ambisddp.cli import main
from ambisddp.dp import exact_value_dp
from ambisddp.instances import random_instance
from ambisddp.io import dumps_model


@pytest.fixture
def instance(tmp_path):
    p = tmp_path / "inst.json"
    assert main(["generate", "--family", "capacity", "--seed", "4", "--horizon", "2", "--dx", "2",
                 "--epsilon", "0.2", "--out", str(p)]) == 0
    return p


def test_solve_writes_outputs(instance, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["solve", str(instance), "--variant", "drr-c", "--stall-iters", "10", "--out", str(out)]) == 0
    lines = (out / "bounds.csv").read_text().splitlines()
    assert lines[0] == "iter,lb,fwd_obj,time_s,cuts_added"
    assert json.loads((out / "policy.json").read_text())["variant"] == "drr_c"


def test_iteration_limit_exit_code_still_writes(instance, tmp_path):
    out = tmp_path / "run"
    assert main(["solve", str(instance), "--max-iters", "2", "--out", str(out)]) == 3
    assert len((out / "bounds.csv").read_text().splitlines()) == 3


def test_neutral_equals_drr_at_zero_radius(instance, capsys):
    main(["solve", str(instance), "--variant", "neutral", "--epsilon", "0", "--stall-iters", "10"])
    a = capsys.readouterr().out.split()[1]
    main(["solve", str(instance), "--variant", "drr-c", "--epsilon", "0", "--stall-iters", "10"])
    b = capsys.readouterr().out.split()[1]
    assert a == b


def test_oracle_prints_triple(instance, capsys):
    assert main(["oracle", str(instance)]) == 0
    words = capsys.readouterr().out.split()
    assert words[0::2] == ["drr", "neutral", "dro"]
    model = random_instance(4, 2, 2, 2)
    assert float(words[3]) == pytest.approx(exact_value_dp(model), rel=1e-8)


def test_dp_variant(instance, tmp_path, capsys):
    assert main(["solve", str(instance), "--variant", "dp", "--risk", "dro", "--out", str(tmp_path / "d")]) == 0
    assert (tmp_path / "d" / "bounds.csv").exists()


def test_evaluate(instance, tmp_path):
    run = tmp_path / "run"
    main(["solve", str(instance), "--stall-iters", "10", "--out", str(run)])
    ev = tmp_path / "ev"
    assert main(["evaluate", str(instance), "--policy", str(run / "policy.json"), "--paths", "15",
                 "--out", str(ev)]) == 0
    assert len((ev / "oos.csv").read_text().splitlines()) == 16
    assert (ev / "summary.csv").read_text().startswith("variant,epsilon,mean,p5")


def test_usage_errors_exit_1(instance, capsys):
    assert main([]) == 1
    assert main(["solve", str(instance), "--variant", "bogus"]) == 1
    assert main(["solve", str(instance), "--max-iters", "many"]) == 1
    assert "invalid" in capsys.readouterr().err


def test_malformed_instance_exit_2_names_field(tmp_path, capsys):
    p = tmp_path / "bad.json"
    doc = json.loads(dumps_model(random_instance(1, 2, 2, 2)))
    del doc["stages"][0]["relations"]
    p.write_text(json.dumps(doc))
    assert main(["solve", str(p)]) == 2
    assert "stages[0].relations" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert main(["oracle", str(tmp_path / "nope.json")]) == 2


def test_generate_other_families(tmp_path):
    assert main(["generate", "--family", "mfip", "--rows", "2", "--cols", "2", "--horizon", "2",
                 "--n-scen", "2", "--out", str(tmp_path / "m.json")]) == 0
    assert main(["generate", "--family", "flip", "--horizon", "2", "--out", str(tmp_path / "f.json")]) == 0
    assert main(["generate", "--family", "mfip", "--rows", "1", "--cols", "1",
                 "--out", str(tmp_path / "x.json")]) == 2


def test_corrupt_study(tmp_path, capsys):
    assert main(["corrupt-study", "--n-scen", "4", "--paths", "10", "--epsilons", "0,40",
                 "--stall-iters", "5", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "corruption.csv").read_text().splitlines()) == 1 + 2 * 3

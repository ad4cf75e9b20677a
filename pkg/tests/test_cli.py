import json

import pytest

from bowforge.cli import (EXIT_CHECKS, EXIT_NUMERIC, EXIT_OK, EXIT_PARSE, EXIT_USAGE, EXIT_VALIDATION, RunConfig,
                          bundled_config, load_config, main)
from bowforge.quat import DegenerateFiberWarning


@pytest.fixture
def cfg_dict():
    return json.loads(bundled_config("tn1_u1.json").read_text())


def write(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def test_config_round_trip(cfg_dict):
    a = RunConfig.from_dict(cfg_dict)
    b = RunConfig.from_dict(json.loads(json.dumps(a.to_dict())))
    assert a == b
    assert a.to_dict() == b.to_dict()
    assert str(a.lambda_points[0]["position"]) == "7/10"


def test_bundled_config_validates():
    cfg = load_config("tn1_u1.json")
    assert cfg.validate() == []
    assert cfg.solution().verified


def test_malformed_json_exits_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["kernel", "-c", str(p), "--out", str(tmp_path)]) == EXIT_PARSE


def test_missing_field_exits_2(tmp_path, cfg_dict):
    del cfg_dict["bow"]
    assert main(["kernel", "-c", write(tmp_path, cfg_dict), "--out", str(tmp_path)]) == EXIT_PARSE


def test_bad_ranks_exit_3(tmp_path, cfg_dict, capsys):
    cfg_dict["bow"]["ranks"] = [1, 1, 2]
    assert main(["kernel", "-c", write(tmp_path, cfg_dict), "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert "total rank change" in capsys.readouterr().err


def test_nonpositive_tolerance_exit_3(tmp_path, cfg_dict):
    cfg_dict["tolerances"] = {"oracle": -1}
    assert main(["kernel", "-c", write(tmp_path, cfg_dict), "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_unknown_command_exits_64(tmp_path, capsys):
    assert main(["frobnicate", "-c", "tn1_u1.json", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err
    assert main(["all", "--only", "nope", "-c", "tn1_u1.json", "--out", str(tmp_path)]) == EXIT_USAGE


def test_numerical_abort_exits_4(tmp_path, cfg_dict):
    cfg_dict["grid"]["asd_point"] = [0.1, -0.2, 0.3, 0.0]  # on the NUT
    with pytest.warns(DegenerateFiberWarning):
        code = main(["asd-check", "-c", write(tmp_path, cfg_dict), "--out", str(tmp_path)])
    assert code == EXIT_NUMERIC
    assert (tmp_path / "report.json").exists()


def test_failing_check_exits_1(tmp_path, cfg_dict):
    cfg_dict["tolerances"] = {"asd": 1e-12}
    assert main(["asd-check", "-c", write(tmp_path, cfg_dict), "--out", str(tmp_path), "--refine", "2"]) == EXIT_CHECKS
    rows = json.loads((tmp_path / "report.json").read_text())
    assert any(not r["passed"] for r in rows)


def test_only_kernel_runs_kernel_sweep(tmp_path):
    assert main(["all", "--only", "kernel", "-c", "tn1_u1.json", "--out", str(tmp_path), "--points", "4"]) == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir()) == ["kernel.csv", "report.json"]
    rows = json.loads((tmp_path / "report.json").read_text())
    assert {r["check"] for r in rows} == {"kernel dimension", "inverse kernel gap", "backend principal angle"}


def test_kernel_csv_and_determinism(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["kernel", "-c", "tn1_u1.json", "--out", str(out1), "--points", "5", "--threads", "3"]) == EXIT_OK
    assert main(["kernel", "-c", "tn1_u1.json", "--out", str(out2), "--points", "5"]) == EXIT_OK
    a, b = (out1 / "kernel.csv").read_bytes(), (out2 / "kernel.csv").read_bytes()
    assert a == b
    lines = a.decode().splitlines()
    assert lines[0].startswith("t1,t2,t3,tau,sigma_1")
    assert len(lines) == 6 and all(line.endswith(",1") for line in lines[1:])
    # 17 significant digits
    assert len(lines[1].split(",")[0].lstrip("-").replace(".", "").lstrip("0")) >= 15


def test_seed_changes_points(tmp_path):
    main(["kernel", "-c", "tn1_u1.json", "--out", str(tmp_path / "a"), "--points", "2"])
    main(["kernel", "-c", "tn1_u1.json", "--out", str(tmp_path / "b"), "--points", "2", "--seed", "7"])
    assert (tmp_path / "a" / "kernel.csv").read_bytes() != (tmp_path / "b" / "kernel.csv").read_bytes()


def test_asd_table_and_chern_json(tmp_path):
    assert main(["asd-check", "-c", "tn1_u1.json", "--out", str(tmp_path), "--refine", "3"]) == EXIT_OK
    assert len((tmp_path / "asd.csv").read_text().splitlines()) == 4
    assert main(["chern", "-c", "tn1_u1.json", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "chern.json").read_text())
    assert doc["index"] == 1 and abs(doc["ch1_numeric"][0] + 0.3) < 1e-2


@pytest.mark.slow
def test_bundled_example_passes_everything(tmp_path):
    assert main(["all", "-c", "tn1_u1.json", "--out", str(tmp_path), "--threads", "2"]) == EXIT_OK
    rows = json.loads((tmp_path / "report.json").read_text())
    assert rows and all(r["passed"] for r in rows)
    for name in ("small.csv", "solution.json", "kernel.csv", "connection.csv", "asd.csv", "asymptotics.csv",
                 "spectral_gap.csv", "chern.json"):
        assert (tmp_path / name).exists()

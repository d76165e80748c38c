import json

import numpy as np
import pytest

from oift import cli


@pytest.fixture(scope="module")
def valid2d_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = cli.main(["run", "valid2d", "--out", str(out / "a")])
    return code, out


def test_run_writes_artifacts(valid2d_run):
    code, out = valid2d_run
    assert code == 0
    run = out / "a"
    for name in ("trajectory.csv", "iterations.csv", "metrics.json", "cost_terms.csv"):
        assert (run / name).is_file()
    lines = (run / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("# ")
    header = lines[1].split(",")
    assert header[0] == "t" and header[1] == "p1_x" and header[-1] == "pBdes_y"
    assert len(header) == 1 + 6 + 6 + 6 + 2 + 2
    assert len(lines) - 2 == 1001
    it = (run / "iterations.csv").read_text().splitlines()
    assert it[1] == "k,g,dg,gamma,backtracks"
    m = json.loads((run / "metrics.json").read_text())
    assert m["status"] == "converged" and m["phi_c"] == "3/3"
    assert m["provenance"]["dt"] == 0.02 and m["provenance"]["scenario"] == "valid2d"
    assert m["terminal_tracking_error"] < 0.1


def test_rerun_is_bitwise_identical(valid2d_run, tmp_path):
    _, out = valid2d_run
    assert cli.main(["run", "valid2d", "--out", str(tmp_path)]) == 0
    for name in ("trajectory.csv", "iterations.csv", "cost_terms.csv"):
        assert (tmp_path / name).read_bytes() == (out / "a" / name).read_bytes()


@pytest.mark.slow
def test_refined_grid_gives_same_cost(valid2d_run, tmp_path):
    _, out = valid2d_run
    assert cli.main(["run", "valid2d", "--dt", "0.01", "--out", str(tmp_path)]) == 0
    g1 = json.loads((out / "a" / "metrics.json").read_text())["g_star"]
    g2 = json.loads((tmp_path / "metrics.json").read_text())["g_star"]
    assert abs(g1 - g2) < 0.01 * g1
    assert json.loads((tmp_path / "metrics.json").read_text())["phi_c"] == "3/3"


def test_unknown_scenario(capsys, tmp_path):
    assert cli.main(["run", "nonexistent", "--out", str(tmp_path)]) != 0
    assert "unknown scenario" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())


def test_invalid_override(capsys, tmp_path):
    assert cli.main(["run", "valid2d", "--r-a", "-1", "--out", str(tmp_path)]) == 2
    assert "r_a" in capsys.readouterr().err
    assert cli.main(["run", "valid2d", "--dt", "0.03", "--out", str(tmp_path)]) == 2


def test_solver_error_exit_code(tmp_path, capsys):
    code = cli.main(["run", "valid3d", "--safe-hessian=off", "--max-iter", "10", "--out", str(tmp_path)])
    assert code == 1
    assert "not PSD" in capsys.readouterr().err
    assert json.loads((tmp_path / "metrics.json").read_text())["status"] == "line_search_failed"


def test_check_default(capsys):
    assert cli.main(["check", "valid2d"]) == 0
    out = capsys.readouterr().out
    assert "FAIL " not in out.replace("XFAIL", "")
    for name in ("gradient", "exact Hessian", "safe Q_o PSD", "projection idempotence", "trajectory defect"):
        assert name in out


def test_check_exact_hessian_expected_failure(capsys):
    assert cli.main(["check", "valid2d", "--safe-hessian=off"]) == 0
    assert "XFAIL  exact Q_o PSD" in capsys.readouterr().out


def test_malformed_config(tmp_path, capsys, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    called = []
    monkeypatch.setattr(cli, "run_checks", lambda sc: called.append(sc) or [])
    assert cli.main(["check", str(bad)]) == 2
    assert not called
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"scenario": "valid2d", "overrides": {"q_x": 1}}))
    assert cli.main(["check", str(wrong)]) == 2
    assert "unknown parameter" in capsys.readouterr().err


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "valid2d", "overrides": {"max_iter": 2, "q_p": 20}, "output_dir": str(tmp_path / "o")}))
    assert cli.main(["run", str(cfg)]) == 0
    m = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert m["iterations"] == 2 and m["status"] == "max_iter_reached"
    assert m["provenance"]["weights"]["q_p"] == 20.0


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
    assert cli.main(["run", "valid2d", "--max-iter", "1"]) == 0
    assert (tmp_path / "valid2d" / "trajectory.csv").is_file()


def test_sweep(tmp_path):
    assert cli.main(["sweep", "valid2d", "--param", "max_iter", "--values", "1", "2", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "summary.csv").read_text().splitlines()
    assert rows[0].startswith("max_iter,status,iterations,g_star,phi_c")
    assert len(rows) == 3
    g = [float(r.split(",")[3]) for r in rows[1:]]
    assert g[1] < g[0]
    assert (tmp_path / "max_iter=1" / "metrics.json").is_file()


def test_sweep_errors(tmp_path):
    assert cli.main(["sweep", "valid2d", "--param", "q_p", "--values", "--out", str(tmp_path)]) == 2
    assert cli.main(["sweep", "valid2d", "--param", "gravity", "--values", "1", "--out", str(tmp_path)]) == 2


def test_list(capsys):
    assert cli.main(["list"]) == 0
    assert "equilibria_2_6" in capsys.readouterr().out

import csv
import json

import pytest

from saddledd.cli import (EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, ConfigError,
                          RunConfig, load_config, main)
from saddledd.problems import load_problem_dir

SMALL = ["--kind", "mixed_darcy_mac", "--nx", "12", "--ny", "12", "-N", "4"]


def test_run_writes_summary(tmp_path):
    out, res = tmp_path / "s.json", tmp_path / "r.csv"
    assert main(["run", *SMALL, "-o", str(out), "--csv", str(res), "--verify"]) == EXIT_OK
    s = json.loads(out.read_text())
    assert s["dims"]["n"] == 312 and s["dims"]["m"] == 144
    assert s["solution"]["block_relres"] <= 1e-8
    assert all(c["passed"] is True for c in s["checks"])
    assert set(s["times"]) >= {"decompose", "setup_MA", "setup_MS1", "setup_MA0", "solve"}
    assert res.read_text().startswith("stage,iteration,relres")


def test_verify_ok_and_fault(capsys):
    assert main(["verify", *SMALL]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out
    assert main(["verify", *SMALL, "--inject-fault", "dual-pou"]) == EXIT_CHECK
    out = capsys.readouterr().out
    assert "FAIL  dual partition of unity" in out


def test_config_error_exit(capsys):
    assert main(["run", "--kind", "nonsense"]) == EXIT_CONFIG
    assert main(["run", *SMALL, "--tol", "2"]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_numerical_failure_exit(capsys):
    assert main(["run", *SMALL, "--maxit", "1"]) == EXIT_NUMERIC
    assert "step 1" in capsys.readouterr().err


def test_zero_rhs(capsys):
    assert main(["run", *SMALL, "--rhs", "zero"]) == EXIT_OK
    s = json.loads(capsys.readouterr().out)
    assert s["solution"]["reports"]["step3"]["iterations"] == 0


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N": 9, "tau_A": 0.3, "overlap": 2}))
    env = {"SADDLEDD_N": "16", "SADDLEDD_TAU_A": "0.4"}
    c = load_config(cfg, {"N": 2}, environ=env)
    assert (c.N, c.tau_A, c.overlap) == (2, 0.4, 2)
    assert load_config(None, {}, environ={}) == RunConfig()


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"no_such_key": 1}))
    with pytest.raises(ConfigError):
        load_config(bad, environ={})
    with pytest.raises(ConfigError):
        load_config(None, environ={"SADDLEDD_N": "four"})
    with pytest.raises(ConfigError):
        load_config(None, {"overlap": -1}, environ={})
    assert load_config(None, environ={"SADDLEDD_TAU_S1": "none",
                                      "SADDLEDD_FLEXIBLE": "no"}).flexible is False


def test_sweep_csv(tmp_path):
    out = tmp_path / "sweep.csv"
    args = ["sweep", "--kind", "mixed_darcy_mac", "--sweep-N", "2,3", "--sweep-cells", "8",
            "--tau-A", "0.25", "-o", str(out)]
    assert main(args) == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert [int(r["N"]) for r in rows] == [2, 3]
    assert all(float(r["block_relres"]) <= 1e-8 for r in rows)
    assert {"step3_iterations", "primal_coupling_max", "dual_coupling_max", "dim_V0"} <= set(rows[0])


def test_gen_roundtrip(tmp_path, capsys):
    d = tmp_path / "prob"
    assert main(["gen", *SMALL, "--C-mode", "split_eps", str(d)]) == EXIT_OK
    sys = load_problem_dir(d)
    assert sys.n == 312 and sys.C_split is not None
    capsys.readouterr()
    assert main(["run", "--problem-dir", str(d), "-N", "4"]) == EXIT_OK
    s = json.loads(capsys.readouterr().out)
    assert s["solution"]["block_relres"] <= 1e-8


def test_spectrum(capsys):
    assert main(["spectrum", *SMALL, "--which", "MA"]) == EXIT_OK
    lo, hi = json.loads(capsys.readouterr().out)["MA"]
    assert 0 < lo <= hi


def test_soras_mode(capsys):
    assert main(["run", *SMALL, "--mode", "soras"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["solution"]["block_relres"] <= 1e-8


def test_identical_config_identical_numbers(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"s{k}.json"
        assert main(["run", *SMALL, "--threads", "1", "-o", str(out)]) == EXIT_OK
        s = json.loads(out.read_text())
        s.pop("times")
        s["config"].pop("output")
        outs.append(s)
    assert outs[0] == outs[1]


def test_verify_without_dual_coarse_space(capsys):
    # no dual coarse space: the bound falls back to the one-level constant k0
    assert main(["verify", *SMALL, "--tau-S1", "0"]) == EXIT_OK
    line = [x for x in capsys.readouterr().out.splitlines() if "dual spectral bound" in x][0]
    assert "dim W0=0" in line and line.startswith("PASS")
